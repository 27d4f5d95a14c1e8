"""Closed-form path: unfinished work, per-job delays, N(t) and S(t).

A token bucket ``(r, b)`` fed one-token jobs is a G/D/1 queue whose
unfinished work ``U`` (token units) jumps by one at each arrival and drains
at slope ``-r``. Job ``i`` waits ``max(0, U(a_i^-) + 1 - b) / r`` seconds and
the number of waiting jobs is ``ceil(max(0, U(t) - b))``.

The unit-rate statement of the delay formula is generalised here by time
scaling: ``U`` stays in token units and delays are divided by ``r`` once.
This module never calls into :mod:`tbsplit.simcore`; the two are checked
against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .model import (
    ArrivalTrace,
    BucketParams,
    PiecewiseLinearCurve,
    SplitSpec,
    StepCurve,
    sum_curves,
)


@dataclass(frozen=True, eq=False)
class UnfinishedWorkProfile:
    pre_arrival_values: np.ndarray
    curve: PiecewiseLinearCurve


def _check_sorted(trace: ArrivalTrace) -> np.ndarray:
    t = np.asarray(trace.times if isinstance(trace, ArrivalTrace) else trace, dtype=float)
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise ValueError("trace is not sorted")
    return t


def unfinished_work_at_arrivals(trace: ArrivalTrace, rate: float,
                                initial_backlog: float = 0.0) -> UnfinishedWorkProfile:
    if not rate > 0:
        raise ValueError("rate must be > 0")
    a = _check_sorted(trace)
    pre = _backend.lindley_backlog(a, float(rate), float(initial_backlog))
    return UnfinishedWorkProfile(pre, _work_curve(a, pre, rate, initial_backlog))


def _work_curve(a: np.ndarray, pre: np.ndarray, rate: float, u0: float) -> PiecewiseLinearCurve:
    times, values, slopes = [], [], []
    if u0 > 0 and (a.size == 0 or a[0] > 0):
        times.append([0.0]); values.append([u0]); slopes.append([-rate])
        hit = u0 / rate
        if a.size == 0 or hit < a[0]:
            times.append([hit]); values.append([0.0]); slopes.append([0.0])
    if a.size:
        # Only the last of several simultaneous arrivals carries the breakpoint.
        last = np.ones(a.size, dtype=bool)
        last[:-1] = a[1:] != a[:-1]
        at, post = a[last], pre[last] + 1.0
        nxt = np.append(at[1:], np.inf)
        times.append(at); values.append(post); slopes.append(np.full(at.size, -float(rate)))
        hit = at + post / rate
        drains = hit < nxt
        times.append(hit[drains]); values.append(np.zeros(drains.sum())); slopes.append(np.zeros(drains.sum()))
    if not times:
        return PiecewiseLinearCurve(initial=u0)
    t = np.concatenate(times)
    order = np.argsort(t, kind="stable")
    return PiecewiseLinearCurve(t[order], np.concatenate(values)[order],
                                np.concatenate(slopes)[order], initial=u0)


def token_bucket_delays(trace: ArrivalTrace, params: BucketParams) -> np.ndarray:
    """Per-job FCFS delays in seconds.

    A bucket with ``burst < 1`` never holds a full token, so every job
    waits forever (``inf``).
    """
    a = _check_sorted(trace)
    if params.burst < 1:
        return np.full(a.size, math.inf)
    pre = _backend.lindley_backlog(a, params.rate, params.initial_backlog)
    return np.maximum(0.0, pre + 1.0 - params.burst) / params.rate


def waiting_count_curve(trace: ArrivalTrace, params: BucketParams) -> StepCurve:
    """N(t) = ceil(max(0, U(t) - b)) as an exact step function.

    Between arrivals ``U - b`` falls at slope ``-r``; N drops by one each
    time ``U - b`` reaches an integer level ``m >= 0``, and at that instant
    takes the value ``m``.
    """
    a = _check_sorted(trace)
    if a.size == 0:
        return StepCurve()
    if params.burst < 1:
        return StepCurve.from_changes(a, np.ones(a.size, dtype=np.int64))
    r, b = params.rate, params.burst
    pre = _backend.lindley_backlog(a, r, params.initial_backlog)
    last = np.ones(a.size, dtype=bool)
    last[:-1] = a[1:] != a[:-1]
    at = a[last]
    excess = pre[last] + 1.0 - b
    gap = np.append(np.diff(at), np.inf)

    n_after = np.ceil(np.maximum(excess, 0.0)).astype(np.int64)
    hi = n_after - 1
    with np.errstate(invalid="ignore"):
        lo = np.where(np.isfinite(gap), np.floor(excess - r * gap) + 1, 0)
    lo = np.maximum(lo, 0).astype(np.int64)
    count = np.maximum(hi - lo + 1, 0)

    seg = np.repeat(np.arange(at.size), count)
    # levels within a segment, counted down from hi
    offs = np.arange(seg.size) - np.repeat(np.cumsum(count) - count, count)
    level = hi[seg] - offs
    cross_t = at[seg] + (excess[seg] - level) / r

    t = np.concatenate([at, cross_t])
    v = np.concatenate([n_after, level])
    order = np.argsort(t, kind="stable")
    t, v = t[order], v[order]
    # A crossing can round onto the next arrival; the arrival value wins.
    keep = np.ones(t.size, dtype=bool)
    keep[:-1] = t[1:] != t[:-1]
    return StepCurve.compressed(t[keep], v[keep])


def latency_curve(curve: StepCurve) -> PiecewiseLinearCurve:
    """S(t) = integral of N over [0, t], as breakpoints at the steps of N."""
    if curve.times.size == 0:
        return PiecewiseLinearCurve()
    t, n = curve.times, curve.values.astype(float)
    area = _backend.compensated_cumsum(n[:-1] * np.diff(t))
    if t[0] > 0:
        t = np.concatenate(([0.0], t)); n = np.concatenate(([0.0], n)); area = np.concatenate(([0.0], area))
    return PiecewiseLinearCurve(t, area, n)


def latency_integral(curve: StepCurve, t: float) -> float:
    """Exact integral of a step curve on ``[0, t]`` (``t`` may be ``inf``)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if curve.times.size == 0:
        return 0.0
    if math.isinf(t):
        return math.inf if curve.final > 0 else float(latency_curve(curve).values[-1])
    return float(latency_curve(curve)(t))


@dataclass(frozen=True, eq=False)
class SystemCurves:
    profiles: tuple[UnfinishedWorkProfile, ...]
    delays: np.ndarray
    waiting: tuple[StepCurve, ...]
    combined_waiting: StepCurve
    combined_latency: PiecewiseLinearCurve
    combined_work: PiecewiseLinearCurve

    @property
    def total_latency(self) -> float:
        return self.combined_latency.final_value


def check_assignment(n: int, k: int, assignment) -> np.ndarray:
    asg = np.asarray(assignment, dtype=np.int64)
    if asg.shape != (n,):
        raise ValueError(f"assignment length {asg.size} != trace length {n}")
    if asg.size and (asg.min() < 0 or asg.max() >= k):
        raise ValueError(f"bucket ordinals must lie in [0, {k})")
    return asg


def system_curves(trace: ArrivalTrace, split: SplitSpec | Sequence[BucketParams],
                  assignment) -> SystemCurves:
    subs = split.sub_buckets if isinstance(split, SplitSpec) else tuple(split)
    a = _check_sorted(trace)
    asg = check_assignment(a.size, len(subs), assignment)
    profiles, waiting = [], []
    delays = np.empty(a.size)
    for l, p in enumerate(subs):
        mask = asg == l
        sub = ArrivalTrace(a[mask])
        profiles.append(unfinished_work_at_arrivals(sub, p.rate, p.initial_backlog))
        delays[mask] = token_bucket_delays(sub, p)
        waiting.append(waiting_count_curve(sub, p))
    combined = sum_curves(waiting)
    return SystemCurves(
        tuple(profiles), delays, tuple(waiting), combined, latency_curve(combined),
        sum_curves([pr.curve for pr in profiles]),
    )
