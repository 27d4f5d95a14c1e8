import numpy as np
import pytest
from hypothesis import given, strategies as st

from tbsplit import simcore
from tbsplit.model import ArrivalTrace, BucketParams, SplitSpec
from tbsplit.routing import RoutingPolicy, Snapshot, assign_offline, online_decide
from strategies import times


def test_assign_offline_examples():
    tr = ArrivalTrace([0, 1, 2, 3])
    assert assign_offline(tr, RoutingPolicy.round_robin(), 2).tolist() == [0, 1, 0, 1]
    assert assign_offline(tr, RoutingPolicy.all_to_one(0), 2).tolist() == [0, 0, 0, 0]
    a = assign_offline(tr, RoutingPolicy.uniform_random(7), 3)
    b = assign_offline(tr, RoutingPolicy.uniform_random(7), 3)
    assert a.tolist() == b.tolist()


def test_assign_offline_errors():
    tr = ArrivalTrace([0, 1])
    with pytest.raises(ValueError, match="offline"):
        assign_offline(tr, RoutingPolicy.jsq(), 2)
    with pytest.raises(ValueError, match="length"):
        assign_offline(tr, RoutingPolicy.custom([0]), 2)
    with pytest.raises(ValueError):
        assign_offline(tr, RoutingPolicy.custom([0, 2]), 2)
    with pytest.raises(ValueError):
        assign_offline(tr, RoutingPolicy.all_to_one(3), 2)


def test_online_decide_examples():
    jsq = RoutingPolicy.jsq()
    assert online_decide(Snapshot((2, 0), (0.0, 0.3)), jsq) == 1
    assert online_decide(Snapshot((1, 1), (0.0, 0.0)), jsq) == 0
    assert online_decide(Snapshot((0, 5), (1.0, 0.0)), RoutingPolicy.all_to_one(1)) == 1


@given(st.integers(0, 40), st.integers(1, 6), st.integers(0, 99))
def test_online_consistent_with_offline(n, k, seed):
    for policy in (RoutingPolicy.round_robin(), RoutingPolicy.all_to_one(k - 1),
                   RoutingPolicy.custom([(i * 7) % k for i in range(n)])):
        off = assign_offline(n, policy, k).tolist()
        on = [online_decide(Snapshot((0,) * k, (0.0,) * k, i), policy) for i in range(n)]
        assert on == off


@given(times, st.integers(1, 5), st.sampled_from(["round_robin", "uniform_random", "jsq", "all_to_one"]))
def test_assignment_partitions_trace(ts, k, name):
    tr = ArrivalTrace(ts)
    split = SplitSpec.equal(BucketParams(1.0, float(k)), k)
    sim = simcore.simulate_split_system(tr, split, RoutingPolicy.parse(name))
    asg = sim.assignment
    assert asg.shape == (len(ts),) and ((asg >= 0) & (asg < k)).all()
    assert sum(len(r) for r in sim.per_bucket) == len(ts)
    for l, r in enumerate(sim.per_bucket):
        np.testing.assert_array_equal(r.arrivals, tr.times[asg == l])


def test_jsq_is_causal():
    # the decision for job i must not change when later arrivals are appended
    base = [0, 0, 0, 0.2, 0.4, 3.0]
    split = SplitSpec.equal(BucketParams(1.0, 2.0), 2, RoutingPolicy.jsq())
    full = simcore.route_online(ArrivalTrace(base + [3.1, 3.1, 9.0]), split)
    short = simcore.route_online(ArrivalTrace(base), split)
    assert full[: len(base)].tolist() == short.tolist()


def test_parse_policy_names():
    assert RoutingPolicy.parse("jsq").online
    assert RoutingPolicy.parse({"name": "all_to_one", "target": 2}).target == 2
    assert RoutingPolicy.parse({"name": "custom", "assignment": [0, 1]}).assignment == (0, 1)
    with pytest.raises(ValueError):
        RoutingPolicy.parse("sticky")
