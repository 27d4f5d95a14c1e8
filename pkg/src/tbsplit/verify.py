"""Checks that splitting a bucket never lowers accrued latency.

All inequalities are evaluated on the complete event grid of both systems
(arrivals, departures, slope changes) plus interval midpoints. Every curve
involved is linear between consecutive grid points, so this is an exhaustive
check of "for all t", not a sampling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import analytic, simcore
from .model import (
    TIME_TOL,
    ArrivalTrace,
    BucketParams,
    SplitSpec,
    validate_split,
)
from .routing import POLICY_NAMES, RoutingPolicy, assign_offline
from .simcore import ServiceOrder
from .workload import KINDS, GeneratorSpec, generate


def _finite(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def event_grid(*time_sets: np.ndarray) -> np.ndarray:
    """Union of the given instants, their midpoints, and one point past the end."""
    pts = np.concatenate([np.asarray(t, dtype=float).ravel() for t in time_sets] + [np.zeros(1)])
    pts = np.unique(pts[np.isfinite(pts)])
    mids = 0.5 * (pts[:-1] + pts[1:])
    return np.unique(np.concatenate([pts, mids, [pts[-1] + 1.0]]))


@dataclass(eq=False)
class ComparisonReport:
    """One-bucket vs split values of a checked quantity on an event grid."""

    quantity: str
    event_times: np.ndarray
    one_values: np.ndarray
    split_values: np.ndarray
    min_slack: float
    violations: list[tuple[float, float, float]]
    strict_gap: float = 0.0
    one_total: float = 0.0
    split_total: float = 0.0
    path_error: float = 0.0
    path_disagreement: bool = False
    tolerance: float = TIME_TOL
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def holds(self) -> bool:
        return not self.violations

    def to_dict(self, curves: bool = False) -> dict:
        d = {
            "quantity": self.quantity,
            "holds": self.holds,
            "min_slack": _finite(self.min_slack),
            "violations": [list(v) for v in self.violations],
            "strict_gap": _finite(self.strict_gap),
            "one_total": _finite(self.one_total),
            "split_total": _finite(self.split_total),
            "path_error": _finite(self.path_error),
            "path_disagreement": self.path_disagreement,
            "tolerance": self.tolerance,
            "grid_points": int(self.event_times.size),
        }
        if curves:
            d["event_times"] = self.event_times.tolist()
            d["one_values"] = self.one_values.tolist()
            d["split_values"] = self.split_values.tolist()
        return d


def _compare(quantity, grid, one, split, tol, **kw) -> ComparisonReport:
    slack = split - one
    bad = np.flatnonzero(slack < -tol)
    violations = [(float(grid[i]), float(one[i]), float(split[i])) for i in bad]
    min_slack = float(slack.min()) if slack.size else 0.0
    return ComparisonReport(quantity, grid, one, split, min_slack, violations, tolerance=tol, **kw)


def _require_valid(aggregate: BucketParams, split: SplitSpec) -> None:
    rep = validate_split(aggregate, split)
    if not rep.valid:
        raise ValueError("invalid split: " + "; ".join(rep.violations))


def check_lemma_unfinished_work(trace: ArrivalTrace, split: SplitSpec, assignment,
                                aggregate: BucketParams | None = None,
                                tolerance: float = TIME_TOL) -> ComparisonReport:
    """Unfinished work of one queue at the aggregate rate vs the sum over the split.

    Both right values and left limits are compared at each grid point, since
    the curves jump at arrivals. ``extras["components"]`` holds the per-bucket
    right values on the grid.
    """
    aggregate = aggregate or split.aggregate()
    asg = analytic.check_assignment(len(trace), split.k, assignment)
    one = analytic.unfinished_work_at_arrivals(trace, aggregate.rate, aggregate.initial_backlog).curve
    parts = [
        analytic.unfinished_work_at_arrivals(trace.subtrace(asg == l), p.rate, p.initial_backlog).curve
        for l, p in enumerate(split.sub_buckets)
    ]
    grid = event_grid(trace.times, one.times, *[c.times for c in parts])
    comp = np.array([c(grid) for c in parts]).reshape(len(parts), grid.size)
    comp_left = np.array([c.left_limit(grid) for c in parts]).reshape(len(parts), grid.size)
    one_r, one_l = one(grid), one.left_limit(grid)
    rep = _compare("unfinished_work", np.concatenate([grid, grid]),
                   np.concatenate([one_l, one_r]),
                   np.concatenate([comp_left.sum(0), comp.sum(0)]), tolerance)
    rep.extras["grid"] = grid
    rep.extras["one"] = one_r
    rep.extras["components"] = comp
    return rep


def lemma_state_samples(report: ComparisonReport, aggregate: BucketParams, split: SplitSpec) -> list:
    """(U, b, [(U_l, b_l), ...]) states harvested from a lemma report's grid."""
    one, comp = report.extras["one"], report.extras["components"]
    bursts = [p.burst for p in split.sub_buckets]
    return [
        (float(one[j]), aggregate.burst, list(zip(comp[:, j].tolist(), bursts)))
        for j in range(one.size)
    ]


@dataclass(frozen=True)
class CaseVerdict:
    case: str  # "1", "2a", "2b" or "rejected"
    holds: bool
    ceiling_holds: bool
    lhs: float = 0.0
    rhs: float = 0.0

    @property
    def rejected(self) -> bool:
        return self.case == "rejected"


def _ceil_tol(x: float, tol: float) -> int:
    return math.ceil(x - tol)


def check_max_inequality(samples, tolerance: float = TIME_TOL) -> list[CaseVerdict]:
    """Classify each state and test ``max(0, U-b) <= sum max(0, U_l-b_l)``.

    Samples are ``(U, b, [(U_l, b_l), ...])``. A sample breaking the premise
    ``U <= sum U_l`` and ``b = sum b_l`` is returned as ``rejected``. Case 1
    is ``U <= b``; otherwise 2b when every ``U_l >= b_l`` and 2a when only
    some are.
    """
    out = []
    for u, b, parts in samples:
        us = [float(p[0]) for p in parts]
        bs = [float(p[1]) for p in parts]
        if u > math.fsum(us) + tolerance or abs(b - math.fsum(bs)) > 1e-12 * max(1.0, abs(b)):
            out.append(CaseVerdict("rejected", False, False))
            continue
        lhs = max(0.0, u - b)
        terms = [max(0.0, ul - bl) for ul, bl in zip(us, bs)]
        rhs = math.fsum(terms)
        if u - b <= 0:
            case = "1"
        elif all(ul - bl >= 0 for ul, bl in zip(us, bs)):
            case = "2b"
        else:
            case = "2a"
        ceiling_ok = _ceil_tol(lhs, tolerance) <= sum(_ceil_tol(t, tolerance) for t in terms)
        out.append(CaseVerdict(case, lhs <= rhs + tolerance, ceiling_ok, lhs, rhs))
    return out


def _latency_report(trace, aggregate, split, assignment_or_policy, order, tolerance,
                    inject_disagreement: float = 0.0):
    order = ServiceOrder.parse(order)
    sim_one = simcore.simulate_bucket(trace, aggregate, order)
    sim_split = simcore.simulate_split_system(trace, split, assignment_or_policy, order)
    ana_one_n = analytic.waiting_count_curve(trace, aggregate)
    ana_one = analytic.latency_curve(ana_one_n)
    ana_sys = analytic.system_curves(trace, split, sim_split.assignment)
    ana_split = ana_sys.combined_latency

    sim_one_s, sim_split_s = sim_one.latency_curve, sim_split.latency_curve
    grid = event_grid(trace.times, sim_one.event_times, sim_split.combined.event_times,
                      ana_one.times, ana_split.times)
    a1, a2 = ana_one(grid), ana_split(grid)
    s1, s2 = sim_one_s(grid), sim_split_s(grid) + inject_disagreement

    diffs = [np.max(np.abs(a1 - s1), initial=0.0), np.max(np.abs(a2 - s2), initial=0.0)]
    tot = [(ana_one.final_value, sim_one.total_latency),
           (ana_split.final_value, sim_split.combined.total_latency)]
    for x, y in tot:
        if math.isinf(x) or math.isinf(y):
            diffs.append(0.0 if x == y else math.inf)
        else:
            diffs.append(abs(x - y))
    path_error = float(max(diffs))

    one_total, split_total = ana_one.final_value, ana_split.final_value
    gap = split_total - one_total if not (math.isinf(one_total) and math.isinf(split_total)) else math.nan
    rep = _compare("latency", grid, a1, a2, tolerance, strict_gap=gap,
                   one_total=one_total, split_total=split_total,
                   path_error=path_error, path_disagreement=path_error > tolerance)
    # the simulated curves must satisfy the inequality as well
    flagged = set(np.flatnonzero(a2 - a1 < -tolerance).tolist())
    rep.violations.extend((float(grid[i]), float(s1[i]), float(s2[i]))
                          for i in np.flatnonzero(s2 - s1 < -tolerance) if i not in flagged)
    rep.min_slack = min(rep.min_slack, float(np.min(s2 - s1, initial=math.inf)))
    rep.extras.update(sim_one=sim_one, sim_split=sim_split, assignment=sim_split.assignment)
    return rep


def check_theorem_latency(trace: ArrivalTrace, aggregate: BucketParams, split: SplitSpec,
                          assignment_or_policy=None, order=None,
                          tolerance: float = TIME_TOL, *,
                          inject_disagreement: float = 0.0) -> ComparisonReport:
    """S(t) of the single bucket vs S^(k)(t) of the split, along both paths.

    Disagreement between the analytic and simulated curves is reported in
    ``path_error`` / ``path_disagreement`` and never counted as a violation.
    ``inject_disagreement`` offsets the simulated split curve (test hook).
    """
    _require_valid(aggregate, split)
    if not isinstance(trace, ArrivalTrace):
        trace = ArrivalTrace(trace)
    return _latency_report(trace, aggregate, split, assignment_or_policy, order, tolerance,
                           inject_disagreement)


@dataclass(frozen=True)
class OrderVerdict:
    identical: bool
    max_curve_diff: float
    max_departure_diff: float
    delays_differ: bool
    orders: tuple[str, ...]


def check_order_invariance(trace: ArrivalTrace, params: BucketParams, orders,
                           tolerance: float = TIME_TOL) -> OrderVerdict:
    orders = [ServiceOrder.parse(o) for o in orders]
    if len(orders) < 2:
        raise ValueError("need at least two service orders")
    runs = [simcore.simulate_bucket(trace, params, o) for o in orders]
    grid = event_grid(*[r.event_times for r in runs])
    ref = runs[0]
    ref_s, ref_dep = ref.latency_curve(grid), np.sort(ref.departures)
    curve_diff = dep_diff = 0.0
    differ = False
    for r in runs[1:]:
        curve_diff = max(curve_diff, float(np.max(np.abs(r.latency_curve(grid) - ref_s), initial=0.0)))
        d = np.sort(r.departures)
        fin = np.isfinite(d) & np.isfinite(ref_dep)
        if not np.array_equal(np.isfinite(d), np.isfinite(ref_dep)):
            dep_diff = math.inf
        elif fin.any():
            dep_diff = max(dep_diff, float(np.max(np.abs(d[fin] - ref_dep[fin]))))
        differ = differ or not np.allclose(r.delays, ref.delays, rtol=0, atol=tolerance)
    ok = curve_diff <= tolerance and dep_diff <= tolerance
    return OrderVerdict(ok, curve_diff, dep_diff, differ, tuple(str(o) for o in orders))


# --------------------------------------------------------------------------
# Randomised campaign


def random_partition(total: float, k: int, rng: np.random.Generator, floor: float = 0.0,
                     integer: bool = False, min_share: float = 0.2) -> list[float]:
    """Split ``total`` into ``k`` parts, each ``>= floor``, summing exactly.

    Proportions are normalised random draws, each at least ``min_share / k``
    of the spare amount; the last part takes the remainder so the sum
    matches ``total`` to rounding.
    """
    spare = total - k * floor
    if spare < 0:
        raise ValueError("total too small for the requested floor")
    if integer:
        counts = rng.multinomial(int(round(spare)), np.full(k, 1.0 / k))
        return [float(floor + c) for c in counts]
    p = rng.dirichlet(np.ones(k))
    p = min_share / k + (1.0 - min_share) * p
    parts = [floor + spare * float(x) for x in p[:-1]]
    parts.append(total - math.fsum(parts))
    return parts


@dataclass(frozen=True)
class CampaignConfig:
    trials: int = 1000
    seed: int = 0
    k_min: int = 2
    k_max: int = 8
    n_min: int = 1
    # Defaults keep S(t) below ~1e6 job-seconds, where a 1e-9 absolute
    # comparison is still above double-precision resolution.
    n_max: int = 120
    rate_min: float = 0.5
    rate_max: float = 10.0
    min_rate_share: float = 0.5
    burst_extra_max: float = 10.0
    load_min: float = 0.3
    load_max: float = 1.5
    workloads: tuple[str, ...] = KINDS
    policies: tuple[str, ...] = POLICY_NAMES
    orders: tuple[str, ...] = ("fcfs", "lcfs", "random")
    partition: str = "random"
    integer_burst_prob: float = 0.3
    tolerance: float = TIME_TOL
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 1 <= self.k_min <= self.k_max:
            raise ValueError("need 1 <= k_min <= k_max")
        if not 0 <= self.n_min <= self.n_max:
            raise ValueError("need 0 <= n_min <= n_max")
        if not 0 < self.rate_min <= self.rate_max:
            raise ValueError("need 0 < rate_min <= rate_max")
        if not 0 < self.load_min <= self.load_max:
            raise ValueError("need 0 < load_min <= load_max")
        if not 0 <= self.min_rate_share <= 1:
            raise ValueError("min_rate_share must lie in [0, 1]")
        if self.partition not in ("random", "equal"):
            raise ValueError("partition must be 'random' or 'equal'")
        for name, allowed, given in (("workloads", KINDS, self.workloads),
                                     ("policies", POLICY_NAMES, self.policies),
                                     ("orders", ("fcfs", "lcfs", "random"), self.orders)):
            object.__setattr__(self, name, tuple(given))
            if not given or set(given) - set(allowed):
                raise ValueError(f"{name} must be a non-empty subset of {allowed}")

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown campaign keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        for key in ("workloads", "policies", "orders"):
            d[key] = list(d[key])
        return d


@dataclass(frozen=True)
class Trial:
    index: int
    trace: ArrivalTrace
    workload: GeneratorSpec
    aggregate: BucketParams
    split: SplitSpec
    policy: RoutingPolicy
    order: ServiceOrder


def sample_trial(config: CampaignConfig, index: int) -> Trial:
    rng = np.random.default_rng([config.seed, index])
    k = int(rng.integers(config.k_min, config.k_max + 1))
    rate = float(np.exp(rng.uniform(math.log(config.rate_min), math.log(config.rate_max))))
    integer = rng.random() < config.integer_burst_prob
    extra = rng.uniform(0.0, config.burst_extra_max)
    burst = float(k + (round(extra) if integer else extra))

    if config.partition == "equal":
        subs = [BucketParams(rate / k, burst / k) for _ in range(k)]
    else:
        rates = random_partition(rate, k, rng, min_share=config.min_rate_share)
        bursts = random_partition(burst, k, rng, floor=1.0, integer=integer)
        subs = [BucketParams(r, b) for r, b in zip(rates, bursts)]

    n = int(rng.integers(config.n_min, config.n_max + 1))
    load = rng.uniform(config.load_min, config.load_max)
    kind = config.workloads[rng.integers(len(config.workloads))]
    wseed = int(rng.integers(2**31))
    if kind == "poisson":
        wl = GeneratorSpec("poisson", n=n, seed=wseed, rate=rate * load)
    elif kind == "deterministic":
        wl = GeneratorSpec("deterministic", n=n, seed=wseed, interval=1.0 / (rate * load))
    else:
        m = int(rng.integers(1, math.ceil(2 * burst) + 1))
        intra = 0.0 if rng.random() < 0.5 else float(rng.uniform(0, 0.2 / rate))
        wl = GeneratorSpec("onoff", n=n, seed=wseed, burst_size=m, intra_gap=intra,
                           burst_gap=m / (rate * load))
    trace = generate(wl)

    pname = config.policies[rng.integers(len(config.policies))]
    if pname == "uniform_random":
        policy = RoutingPolicy.uniform_random(int(rng.integers(2**31)))
    elif pname == "all_to_one":
        policy = RoutingPolicy.all_to_one(int(rng.integers(k)))
    elif pname == "custom":
        # biased toward one bucket to stress adversarial splits
        weights = rng.dirichlet(np.full(k, 0.5))
        policy = RoutingPolicy.custom(rng.choice(k, size=n, p=weights).tolist())
    else:
        policy = RoutingPolicy(pname)

    oname = config.orders[rng.integers(len(config.orders))]
    order = ServiceOrder.random(int(rng.integers(2**31))) if oname == "random" else ServiceOrder(oname)
    return Trial(index, trace, wl, BucketParams(rate, burst), SplitSpec(tuple(subs), policy), policy, order)


def run_trial(config: CampaignConfig, index: int) -> dict:
    trial = sample_trial(config, index)
    tol = config.tolerance
    theo = check_theorem_latency(trial.trace, trial.aggregate, trial.split, trial.policy,
                                 trial.order, tol)
    asg = theo.extras["assignment"]
    lemma = check_lemma_unfinished_work(trial.trace, trial.split, asg, trial.aggregate, tol)
    verdicts = check_max_inequality(lemma_state_samples(lemma, trial.aggregate, trial.split), tol)

    sim_one, sim_split = theo.extras["sim_one"], theo.extras["sim_split"]
    envelope = [simcore.departure_envelope_check(sim_one, trial.aggregate)]
    envelope += [simcore.departure_envelope_check(r, p)
                 for r, p in zip(sim_split.per_bucket, trial.split.sub_buckets)]
    env_max = max(envelope)

    violations = []
    for kind, rep in (("theorem", theo), ("lemma", lemma)):
        violations += [{"trial": index, "kind": kind, "time": t, "lhs": lhs, "rhs": rhs}
                       for t, lhs, rhs in rep.violations]
    for v in verdicts:
        if not v.rejected and not (v.holds and v.ceiling_holds):
            violations.append({"trial": index, "kind": "max_inequality", "time": None,
                               "lhs": v.lhs, "rhs": v.rhs})
    if env_max > tol:
        violations.append({"trial": index, "kind": "envelope", "time": None,
                           "lhs": env_max, "rhs": tol})
    cases = {"1": 0, "2a": 0, "2b": 0, "rejected": 0}
    for v in verdicts:
        cases[v.case] += 1
    return {
        "violations": violations,
        "theorem_min_slack": theo.min_slack,
        "lemma_min_slack": lemma.min_slack,
        "gap": theo.strict_gap,
        "path_error": theo.path_error,
        "path_disagreement": theo.path_disagreement,
        "cases": cases,
        "envelope": env_max,
        "k": trial.split.k,
        "policy": trial.policy.kind,
        "order": trial.order.kind,
        "workload": trial.workload.kind,
    }


def _run_chunk(args):
    config, indices = args
    return [run_trial(config, i) for i in indices]


def randomized_campaign(config: CampaignConfig, max_listed: int = 100) -> dict:
    """Run ``config.trials`` independent trials and fold them in index order."""
    idx = list(range(config.trials))
    if config.workers > 1:
        chunks = [idx[i::config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(_run_chunk, [(config, c) for c in chunks]))
        by_index = {}
        for c, res in zip(chunks, parts):
            by_index.update(zip(c, res))
        results = [by_index[i] for i in idx]
    else:
        results = _run_chunk((config, idx))

    violations = [v for r in results for v in r["violations"]]
    counts = {kind: sum(v["kind"] == kind for v in violations)
              for kind in ("theorem", "lemma", "max_inequality", "envelope")}
    gaps = np.array([r["gap"] for r in results], dtype=float)
    finite = gaps[np.isfinite(gaps)]
    cases = {c: sum(r["cases"][c] for r in results) for c in ("1", "2a", "2b", "rejected")}
    coverage = {}
    for key in ("k", "policy", "order", "workload"):
        tally: dict = {}
        for r in results:
            tally[str(r[key])] = tally.get(str(r[key]), 0) + 1
        coverage[key] = dict(sorted(tally.items()))
    return {
        "trials": config.trials,
        "violations": violations[:max_listed],
        "violation_counts": counts,
        "min_slack": _finite(min(r["theorem_min_slack"] for r in results)),
        "lemma_min_slack": _finite(min(r["lemma_min_slack"] for r in results)),
        "gap_quantiles": {
            "p50": _finite(np.quantile(finite, 0.5)) if finite.size else None,
            "p90": _finite(np.quantile(finite, 0.9)) if finite.size else None,
            "max": _finite(finite.max()) if finite.size else None,
        },
        "path_disagreements": sum(r["path_disagreement"] for r in results),
        "max_path_error": _finite(max(r["path_error"] for r in results)),
        "max_inequality": {
            "samples": sum(cases.values()),
            "case_1": cases["1"],
            "case_2a": cases["2a"],
            "case_2b": cases["2b"],
            "premise_rejections": cases["rejected"],
        },
        "max_envelope_violation": _finite(max(r["envelope"] for r in results)),
        "coverage": coverage,
        "config": config.to_dict(),
    }


# --------------------------------------------------------------------------
# Gap search


@dataclass(eq=False)
class GapSearchResult:
    trace: ArrivalTrace
    split: SplitSpec
    assignment: np.ndarray
    gap: float
    report: ComparisonReport
    evaluated: int


def gap_search(family: GeneratorSpec | Callable[[np.random.Generator], ArrivalTrace],
               aggregate: BucketParams, k: int, budget: int, seed: int = 0,
               order=None) -> GapSearchResult:
    """Look for a split and assignment maximising ``S^(k)(inf) - S(inf)``.

    The first half of the budget samples random partitions, traces and
    routing; the rest mutates the best assignment found one job at a time.
    ``family`` is a :class:`GeneratorSpec` (re-seeded per sample) or a
    callable drawing a trace from a generator.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    floor = 1.0 if aggregate.burst >= k else 0.0
    best: GapSearchResult | None = None

    def draw_trace():
        if isinstance(family, GeneratorSpec):
            return generate(replace(family, seed=int(rng.integers(2**31))))
        return family(rng)

    def evaluate(trace, split, asg, count):
        nonlocal best
        rep = check_theorem_latency(trace, aggregate, split, asg, order)
        gap = rep.strict_gap if not math.isnan(rep.strict_gap) else -math.inf
        if best is None or gap > best.gap:
            best = GapSearchResult(trace, split, np.asarray(asg), gap, rep, count)
        best.evaluated = count

    explore = max(1, budget // 2)
    for s in range(budget):
        if s < explore or best is None or len(best.trace) == 0:
            trace = draw_trace()
            if rng.random() < 0.5:
                split = SplitSpec.equal(aggregate, k)
            else:
                rates = random_partition(aggregate.rate, k, rng)
                bursts = random_partition(aggregate.burst, k, rng, floor=floor)
                split = SplitSpec(tuple(BucketParams(r, b) for r, b in zip(rates, bursts)))
            pick = rng.integers(3)
            if pick == 0:
                asg = assign_offline(trace, RoutingPolicy.all_to_one(int(rng.integers(k))), k)
            elif pick == 1:
                asg = rng.integers(0, k, size=len(trace))
            else:
                asg = assign_offline(trace, RoutingPolicy.round_robin(), k)
        else:
            trace, split = best.trace, best.split
            asg = best.assignment.copy()
            asg[rng.integers(asg.size)] = rng.integers(k)
        evaluate(trace, split, asg, s + 1)
    return best
