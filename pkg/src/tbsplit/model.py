"""Domain types shared by the simulators and the verification workbench."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Absolute tolerance (seconds, or job-seconds for latency curves) used for
# every cross-system comparison.
TIME_TOL = 1e-9
SPLIT_REL_TOL = 1e-12


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ArrivalTrace:
    """Nondecreasing job arrival instants. Ties keep their sequence order."""

    times: np.ndarray

    def __init__(self, times: Iterable[float] = ()):
        arr = _frozen_array(list(times) if not isinstance(times, np.ndarray) else times)
        if arr.ndim != 1:
            raise ValueError("arrival times must be one-dimensional")
        if arr.size:
            if not np.all(np.isfinite(arr)):
                raise ValueError("arrival times must be finite")
            if arr[0] < 0:
                raise ValueError("arrival times must be >= 0")
            bad = np.flatnonzero(np.diff(arr) < 0)
            if bad.size:
                i = int(bad[0]) + 1
                raise ValueError(f"arrival times not sorted at index {i}: {arr[i - 1]!r} > {arr[i]!r}")
        object.__setattr__(self, "times", arr)

    def __len__(self) -> int:
        return int(self.times.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ArrivalTrace):
            return NotImplemented
        return np.array_equal(self.times, other.times)

    def __hash__(self) -> int:
        return hash(self.times.tobytes())

    def __repr__(self) -> str:
        return f"ArrivalTrace(n={len(self)})"

    def subtrace(self, mask: np.ndarray) -> "ArrivalTrace":
        return ArrivalTrace(self.times[mask])


@dataclass(frozen=True)
class BucketParams:
    """Token rate (tokens/s) and burst size (tokens) of one bucket.

    ``initial_tokens`` defaults to a full bucket.
    """

    rate: float
    burst: float
    initial_tokens: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError(f"rate must be a positive finite number, got {self.rate!r}")
        if not (math.isfinite(self.burst) and self.burst > 0):
            raise ValueError(f"burst must be a positive finite number, got {self.burst!r}")
        if self.initial_tokens is None:
            object.__setattr__(self, "initial_tokens", float(self.burst))
        elif not (0 <= self.initial_tokens <= self.burst):
            raise ValueError(
                f"initial_tokens must lie in [0, burst], got {self.initial_tokens!r}"
            )

    @property
    def initial_backlog(self) -> float:
        """Unfinished work at time 0, in token units."""
        return self.burst - self.initial_tokens

    def to_dict(self) -> dict:
        d = {"rate": self.rate, "burst": self.burst}
        if self.initial_tokens != self.burst:
            d["initial_tokens"] = self.initial_tokens
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BucketParams":
        return cls(float(d["rate"]), float(d["burst"]),
                   None if d.get("initial_tokens") is None else float(d["initial_tokens"]))


@dataclass(frozen=True)
class SplitSpec:
    sub_buckets: tuple[BucketParams, ...]
    policy: "RoutingPolicy" = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "sub_buckets", tuple(self.sub_buckets))
        if self.policy is None:
            from .routing import RoutingPolicy

            object.__setattr__(self, "policy", RoutingPolicy.round_robin())

    @property
    def k(self) -> int:
        return len(self.sub_buckets)

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.sub_buckets])

    @property
    def bursts(self) -> np.ndarray:
        return np.array([p.burst for p in self.sub_buckets])

    def aggregate(self) -> BucketParams:
        return BucketParams(math.fsum(self.rates), math.fsum(self.bursts))

    @classmethod
    def equal(cls, aggregate: BucketParams, k: int, policy=None) -> "SplitSpec":
        """``k`` identical sub-buckets ``(r/k, b/k)``."""
        subs = [BucketParams(aggregate.rate / k, aggregate.burst / k) for _ in range(k)]
        return cls(tuple(subs), policy)


@dataclass(frozen=True)
class JobOutcome:
    job_index: int
    arrival: float
    bucket: int
    delay: float
    departure: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.valid


def validate_split(aggregate: BucketParams, split) -> ValidationReport:
    """Check a split against its declared aggregate.

    ``split`` may be a :class:`SplitSpec` or a plain sequence of
    ``(rate, burst)`` pairs / :class:`BucketParams`. Never raises; every
    violated constraint is listed in the report.
    """
    violations: list[str] = []
    warnings: list[str] = []
    subs = split.sub_buckets if isinstance(split, SplitSpec) else tuple(split)
    if len(subs) < 1:
        violations.append("split must contain at least one sub-bucket (k >= 1)")
        return ValidationReport(tuple(violations), tuple(warnings))

    rates, bursts = [], []
    for l, sb in enumerate(subs):
        if isinstance(sb, BucketParams):
            r, b, x0 = sb.rate, sb.burst, sb.initial_tokens
        else:
            r, b = (float(v) for v in sb[:2])
            x0 = float(sb[2]) if len(sb) > 2 else b
        if not (math.isfinite(r) and r > 0):
            violations.append(f"sub-bucket {l}: rate must be > 0 (got {r!r})")
        if not (math.isfinite(b) and b > 0):
            violations.append(f"sub-bucket {l}: burst must be > 0 (got {b!r})")
        elif not (0 <= x0 <= b):
            violations.append(f"sub-bucket {l}: initial_tokens {x0!r} outside [0, {b!r}]")
        elif b < 1:
            warnings.append(f"sub-bucket {l}: burst {b!r} < 1, it can never hold a full token")
        rates.append(r)
        bursts.append(b)

    rsum, bsum = math.fsum(rates), math.fsum(bursts)
    if not abs(rsum - aggregate.rate) <= SPLIT_REL_TOL * aggregate.rate:
        violations.append(f"rate sum {rsum!r} != aggregate rate {aggregate.rate!r}")
    if not abs(bsum - aggregate.burst) <= SPLIT_REL_TOL * aggregate.burst:
        violations.append(f"burst sum {bsum!r} != aggregate burst {aggregate.burst!r}")
    if aggregate.burst < 1:
        warnings.append(f"aggregate burst {aggregate.burst!r} < 1")
    return ValidationReport(tuple(violations), tuple(warnings))


# --------------------------------------------------------------------------
# Curves


def _locate(times: np.ndarray, t, side: str = "right") -> np.ndarray:
    return np.searchsorted(times, t, side=side) - 1


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Right-continuous integer step function, zero before the first breakpoint."""

    times: np.ndarray
    values: np.ndarray

    def __init__(self, times=(), values=()):
        t = _frozen_array(times)
        v = _frozen_array(values, dtype=np.int64)
        if t.shape != v.shape:
            raise ValueError("times and values must have equal length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_changes(cls, times: np.ndarray, deltas: np.ndarray) -> "StepCurve":
        """Build from unsorted (time, increment) events; coincident events merge."""
        times = np.asarray(times, dtype=float)
        deltas = np.asarray(deltas, dtype=np.int64)
        keep = np.isfinite(times)
        times, deltas = times[keep], deltas[keep]
        if times.size == 0:
            return cls()
        uniq, inv = np.unique(times, return_inverse=True)
        level = np.cumsum(np.bincount(inv, weights=deltas, minlength=uniq.size)).round().astype(np.int64)
        return cls.compressed(uniq, level)

    @classmethod
    def compressed(cls, times: np.ndarray, values: np.ndarray) -> "StepCurve":
        """Drop breakpoints that do not change the value."""
        values = np.asarray(values, dtype=np.int64)
        prev = np.concatenate(([0], values[:-1]))
        keep = values != prev
        return cls(np.asarray(times)[keep], values[keep])

    @property
    def breakpoints(self) -> list[tuple[float, int]]:
        return list(zip(self.times.tolist(), self.values.tolist()))

    def __call__(self, t):
        idx = _locate(self.times, t)
        vals = np.where(idx >= 0, self.values[np.maximum(idx, 0)] if self.values.size else 0, 0)
        return vals if np.ndim(t) else int(vals)

    @property
    def final(self) -> int:
        return int(self.values[-1]) if self.values.size else 0

    def __add__(self, other: "StepCurve") -> "StepCurve":
        grid = np.union1d(self.times, other.times)
        return StepCurve.compressed(grid, self(grid) + other(grid))

    def __repr__(self) -> str:
        return f"StepCurve({self.breakpoints[:6]}{'...' if self.times.size > 6 else ''})"


@dataclass(frozen=True, eq=False)
class PiecewiseLinearCurve:
    """Piecewise-linear curve given by ``(time, value, right_slope)`` breakpoints.

    ``value`` is the right limit at ``time``; an upward jump at a breakpoint
    shows up as ``left_limit(t) < value``. Before the first breakpoint the
    curve is the constant ``initial``.
    """

    times: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    initial: float = 0.0

    def __init__(self, times=(), values=(), slopes=(), initial: float = 0.0):
        t, v, s = _frozen_array(times), _frozen_array(values), _frozen_array(slopes)
        if not (t.shape == v.shape == s.shape):
            raise ValueError("times, values and slopes must have equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "slopes", s)
        object.__setattr__(self, "initial", float(initial))

    @property
    def breakpoints(self) -> list[tuple[float, float, float]]:
        return list(zip(self.times.tolist(), self.values.tolist(), self.slopes.tolist()))

    def _eval(self, t, side: str):
        t_arr = np.asarray(t, dtype=float)
        if self.times.size == 0:
            out = np.full(t_arr.shape, self.initial)
        else:
            idx = _locate(self.times, t_arr, side)
            j = np.maximum(idx, 0)
            # Inf*0 must read as 0 for a flat tail.
            with np.errstate(invalid="ignore"):
                dt = t_arr - self.times[j]
                lin = self.values[j] + np.where(self.slopes[j] == 0, 0.0, self.slopes[j] * dt)
            out = np.where(idx >= 0, lin, self.initial)
        return out if np.ndim(t) else float(out)

    def __call__(self, t):
        return self._eval(t, "right")

    def left_limit(self, t):
        return self._eval(t, "left")

    def right_slope(self, t):
        t_arr = np.asarray(t, dtype=float)
        if self.times.size == 0:
            out = np.zeros(t_arr.shape)
        else:
            idx = _locate(self.times, t_arr)
            out = np.where(idx >= 0, self.slopes[np.maximum(idx, 0)], 0.0)
        return out if np.ndim(t) else float(out)

    @property
    def final_value(self) -> float:
        """Limit as t -> inf (inf when the last slope is positive)."""
        if self.times.size == 0:
            return self.initial
        s = self.slopes[-1]
        if s > 0:
            return math.inf
        if s < 0:
            return -math.inf
        return float(self.values[-1])

    def __add__(self, other: "PiecewiseLinearCurve") -> "PiecewiseLinearCurve":
        grid = np.union1d(self.times, other.times)
        return PiecewiseLinearCurve(
            grid, self(grid) + other(grid), self.right_slope(grid) + other.right_slope(grid),
            initial=self.initial + other.initial,
        )

    def __repr__(self) -> str:
        return f"PiecewiseLinearCurve(n={self.times.size}, initial={self.initial})"


def sum_curves(curves: Sequence):
    it = iter(curves)
    total = next(it)
    for c in it:
        total = total + c
    return total
