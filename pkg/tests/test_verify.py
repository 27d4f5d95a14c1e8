import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tbsplit import verify
from tbsplit.model import ArrivalTrace, BucketParams, SplitSpec, validate_split
from tbsplit.routing import RoutingPolicy
from tbsplit.workload import GeneratorSpec
from strategies import times

HALVES = SplitSpec((BucketParams(0.5, 1), BucketParams(0.5, 1)))


def test_lemma_example():
    rep = verify.check_lemma_unfinished_work(ArrivalTrace([0, 0]), HALVES, [0, 0], BucketParams(1, 2))
    assert rep.holds
    grid = rep.extras["grid"]
    i = int(np.flatnonzero(grid == 0.0)[0])
    assert rep.extras["one"][i] == 2.0
    assert rep.extras["components"][:, i].tolist() == [2.0, 0.0]


def test_lemma_k1_equality():
    tr = ArrivalTrace([0, 0, 0.3, 2.0, 2.1])
    p = BucketParams(1.7, 3)
    rep = verify.check_lemma_unfinished_work(tr, SplitSpec((p,)), [0] * 5, p)
    assert rep.min_slack == 0.0 and rep.holds


@pytest.mark.parametrize("sample, case, lhs, rhs", [
    ((1.5, 2, [(1, 1), (0.5, 1)]), "1", 0.0, 0.0),
    ((3, 2, [(2, 1), (1.5, 1)]), "2b", 1.0, 1.5),
    ((2.5, 2, [(0.5, 1), (2, 1)]), "2a", 0.5, 1.0),
])
def test_max_inequality_examples(sample, case, lhs, rhs):
    (v,) = verify.check_max_inequality([sample])
    assert v.case == case and v.holds and v.ceiling_holds
    assert v.lhs == lhs and v.rhs == rhs


def test_max_inequality_rejects_premise_violations():
    (v,) = verify.check_max_inequality([(5, 2, [(1, 1), (1, 1)])])
    assert v.rejected
    (v,) = verify.check_max_inequality([(1, 3, [(1, 1), (1, 1)])])
    assert v.rejected


@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0.5, 5)), min_size=1, max_size=6),
       st.floats(0, 1))
def test_max_inequality_holds_whenever_premise_does(parts, frac):
    total = math.fsum(u for u, _ in parts)
    b = math.fsum(bl for _, bl in parts)
    (v,) = verify.check_max_inequality([(total * frac, b, parts)])
    assert not v.rejected and v.holds and v.ceiling_holds


def test_theorem_examples():
    tr = ArrivalTrace([0, 0])
    agg = BucketParams(1, 2)
    rep = verify.check_theorem_latency(tr, agg, HALVES, [0, 0])
    assert (rep.one_total, rep.split_total, rep.strict_gap) == (0.0, 2.0, 2.0)
    assert rep.holds and not rep.path_disagreement
    rep = verify.check_theorem_latency(tr, agg, HALVES, [0, 1])
    assert (rep.one_total, rep.split_total, rep.strict_gap) == (0.0, 0.0, 0.0)
    rep = verify.check_theorem_latency(tr, agg, SplitSpec((agg,)), [0, 0])
    assert rep.strict_gap == 0.0 and np.array_equal(rep.one_values, rep.split_values)


def test_theorem_rejects_invalid_split():
    with pytest.raises(ValueError, match="invalid split"):
        verify.check_theorem_latency(ArrivalTrace([0]), BucketParams(2, 2), HALVES, [0])


def test_path_disagreement_is_separate_from_violation():
    rep = verify.check_theorem_latency(ArrivalTrace([0, 0]), BucketParams(1, 2), HALVES, [0, 0],
                                       inject_disagreement=1e-3)
    assert rep.path_disagreement and rep.holds


@given(times, st.integers(1, 4), st.sampled_from(["fcfs", "lcfs", "random"]),
       st.sampled_from(["round_robin", "uniform_random", "jsq", "all_to_one"]))
def test_theorem_holds_equal_splits(ts, k, order, policy):
    agg = BucketParams(1.3, 2.0 * k)
    split = SplitSpec.equal(agg, k)
    rep = verify.check_theorem_latency(ArrivalTrace(ts), agg, split, RoutingPolicy.parse(policy), order)
    assert rep.holds and not rep.path_disagreement
    if k == 1:
        assert rep.strict_gap == 0.0


def test_sub_unit_burst_split_gives_infinite_gap():
    agg = BucketParams(1, 2)
    split = SplitSpec((BucketParams(0.5, 1.5), BucketParams(0.5, 0.5)))
    assert validate_split(agg, split).warnings
    rep = verify.check_theorem_latency(ArrivalTrace([0, 1]), agg, split, [0, 1])
    assert rep.holds and rep.strict_gap == math.inf and not rep.path_disagreement


def test_order_invariance_example():
    v = verify.check_order_invariance(ArrivalTrace([0, 0, 0, 0]), BucketParams(1, 2), ["fcfs", "lcfs"])
    assert v.identical and v.delays_differ
    v = verify.check_order_invariance(ArrivalTrace([1.0]), BucketParams(1, 2), ["fcfs", "lcfs", "random:1"])
    assert v.identical and not v.delays_differ
    with pytest.raises(ValueError):
        verify.check_order_invariance(ArrivalTrace([0]), BucketParams(1, 1), ["fcfs"])


def test_order_invariance_random_traces(rng):
    for _ in range(100):
        ts = np.sort(rng.uniform(0, 20, size=rng.integers(1, 60)))
        p = BucketParams(rng.uniform(0.2, 5), rng.uniform(1, 5))
        v = verify.check_order_invariance(ArrivalTrace(ts), p, ["fcfs", "lcfs", f"random:{rng.integers(99)}"])
        assert v.identical


def test_random_partition_sums_exactly(rng):
    for k in range(1, 9):
        parts = verify.random_partition(7.3, k, rng, floor=0.5)
        assert math.fsum(parts) == pytest.approx(7.3, rel=1e-15) and min(parts) >= 0.5
        ints = verify.random_partition(float(k + 3), k, rng, floor=1.0, integer=True)
        assert sum(ints) == k + 3 and all(float(x).is_integer() for x in ints)


def test_sampled_splits_validate():
    cfg = verify.CampaignConfig(trials=50, seed=9)
    for i in range(cfg.trials):
        t = verify.sample_trial(cfg, i)
        assert validate_split(t.aggregate, t.split).valid
        assert 2 <= t.split.k <= 8


def test_campaign_determinism():
    cfg = verify.CampaignConfig(trials=1, seed=5)
    a = json.dumps(verify.randomized_campaign(cfg), sort_keys=True)
    b = json.dumps(verify.randomized_campaign(cfg), sort_keys=True)
    assert a == b


def test_campaign_parallel_fold_matches_serial():
    serial = verify.randomized_campaign(verify.CampaignConfig(trials=12, seed=2))
    parallel = verify.randomized_campaign(verify.CampaignConfig(trials=12, seed=2, workers=3))
    assert json.dumps(serial, sort_keys=True) == json.dumps(parallel, sort_keys=True)


def test_campaign_below_capacity_alternation_has_zero_gaps():
    cfg = verify.CampaignConfig(trials=40, seed=1, k_min=2, k_max=2, workloads=("deterministic",),
                                policies=("round_robin",), partition="equal",
                                load_min=0.2, load_max=0.95, orders=("fcfs", "lcfs"))
    rep = verify.randomized_campaign(cfg)
    assert rep["gap_quantiles"]["max"] == 0.0
    assert sum(rep["violation_counts"].values()) == 0


def test_campaign_small_run_clean():
    rep = verify.randomized_campaign(verify.CampaignConfig(trials=60, seed=11))
    assert sum(rep["violation_counts"].values()) == 0 and rep["path_disagreements"] == 0
    assert rep["max_inequality"]["premise_rejections"] == 0


@pytest.mark.parametrize("bad", [dict(trials=0), dict(k_min=3, k_max=2), dict(policies=("nope",)),
                                 dict(partition="odd"), dict(rate_min=0)])
def test_campaign_config_validation(bad):
    with pytest.raises(ValueError):
        verify.CampaignConfig(**bad)


def test_gap_search_bursts_all_to_one():
    agg = BucketParams(1, 4)
    family = GeneratorSpec("onoff", n=12, burst_size=4, burst_gap=4.0)
    res = verify.gap_search(family, agg, k=2, budget=20, seed=0)
    assert res.gap > 0 and res.evaluated == 20
    again = verify.check_theorem_latency(res.trace, agg, res.split, res.assignment)
    assert abs(again.strict_gap - res.gap) <= 1e-9 and again.path_error <= 1e-9


def test_gap_search_budget_one():
    agg = BucketParams(1, 2)
    res = verify.gap_search(GeneratorSpec("deterministic", n=5, interval=0.5), agg, 2, budget=1, seed=3)
    assert res.evaluated == 1 and res.gap >= 0
    with pytest.raises(ValueError):
        verify.gap_search(GeneratorSpec("deterministic", n=5, interval=0.5), agg, 2, budget=0)


def test_all_to_one_equal_subbucket_gap_positive():
    agg, k = BucketParams(1, 4), 2
    tr = ArrivalTrace([0, 0, 0, 0, 10, 10, 10, 10])
    rep = verify.check_theorem_latency(tr, agg, SplitSpec.equal(agg, k), RoutingPolicy.all_to_one(0))
    assert rep.strict_gap > 0 and rep.one_total == 0.0
