"""Policies assigning arriving jobs to sub-buckets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ArrivalTrace

POLICY_NAMES = ("round_robin", "uniform_random", "jsq", "all_to_one", "custom")


@dataclass(frozen=True)
class RoutingPolicy:
    kind: str
    seed: int | None = None
    target: int | None = None
    assignment: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in POLICY_NAMES:
            raise ValueError(f"unknown routing policy {self.kind!r}; expected one of {POLICY_NAMES}")
        if self.kind == "uniform_random" and self.seed is None:
            object.__setattr__(self, "seed", 0)
        if self.kind == "all_to_one" and self.target is None:
            object.__setattr__(self, "target", 0)
        if self.kind == "custom":
            if self.assignment is None:
                raise ValueError("custom policy needs an assignment vector")
            object.__setattr__(self, "assignment", tuple(int(x) for x in self.assignment))

    @classmethod
    def round_robin(cls) -> "RoutingPolicy":
        return cls("round_robin")

    @classmethod
    def uniform_random(cls, seed: int = 0) -> "RoutingPolicy":
        return cls("uniform_random", seed=int(seed))

    @classmethod
    def jsq(cls) -> "RoutingPolicy":
        return cls("jsq")

    @classmethod
    def all_to_one(cls, target: int = 0) -> "RoutingPolicy":
        return cls("all_to_one", target=int(target))

    @classmethod
    def custom(cls, assignment: Sequence[int]) -> "RoutingPolicy":
        return cls("custom", assignment=tuple(assignment))

    @classmethod
    def parse(cls, spec, **overrides) -> "RoutingPolicy":
        """From a config value: a name, or a dict with ``name``/``kind`` plus options."""
        if isinstance(spec, RoutingPolicy):
            return spec
        if isinstance(spec, str):
            d = {"kind": spec}
        else:
            d = dict(spec)
            d["kind"] = d.pop("name", None) or d.pop("kind")
        d.update({k: v for k, v in overrides.items() if v is not None})
        if "assignment" in d and d["assignment"] is not None:
            d["assignment"] = tuple(d["assignment"])
        return cls(**{k: d.get(k) for k in ("kind", "seed", "target", "assignment")})

    @property
    def online(self) -> bool:
        return self.kind == "jsq"

    def rng(self) -> np.random.Generator | None:
        return np.random.default_rng(self.seed) if self.kind == "uniform_random" else None

    def to_dict(self) -> dict:
        d = {"name": self.kind}
        if self.kind == "uniform_random":
            d["seed"] = self.seed
        elif self.kind == "all_to_one":
            d["target"] = self.target
        elif self.kind == "custom":
            d["assignment"] = list(self.assignment)
        return d

    def __str__(self) -> str:
        if self.kind == "all_to_one":
            return f"all_to_one:{self.target}"
        return self.kind


@dataclass(frozen=True)
class Snapshot:
    """Per-bucket state at an arrival instant, after same-instant departures."""

    waiting: tuple[int, ...]
    tokens: tuple[float, ...]
    job_index: int = 0

    @property
    def k(self) -> int:
        return len(self.waiting)


def assign_offline(trace: ArrivalTrace | int, policy: RoutingPolicy, k: int) -> np.ndarray:
    """Assignment vector for a non-state-dependent policy."""
    n = trace if isinstance(trace, int) else len(trace)
    if k < 1:
        raise ValueError("k must be >= 1")
    if policy.online:
        raise ValueError(f"{policy.kind} depends on bucket state and cannot be assigned offline")
    if policy.kind == "round_robin":
        return np.arange(n, dtype=np.int64) % k
    if policy.kind == "uniform_random":
        return policy.rng().integers(0, k, size=n).astype(np.int64)
    if policy.kind == "all_to_one":
        if not 0 <= policy.target < k:
            raise ValueError(f"target {policy.target} outside [0, {k})")
        return np.full(n, policy.target, dtype=np.int64)
    asg = np.asarray(policy.assignment, dtype=np.int64)
    if asg.size != n:
        raise ValueError(f"custom assignment length {asg.size} != trace length {n}")
    if n and (asg.min() < 0 or asg.max() >= k):
        raise ValueError(f"custom assignment entries must lie in [0, {k})")
    return asg


def online_decide(snapshot: Snapshot, policy: RoutingPolicy, rng: np.random.Generator | None = None) -> int:
    """Bucket for the arriving job.

    JSQ picks the fewest waiting jobs, ties to the lowest ordinal. The other
    policies reproduce :func:`assign_offline`; ``uniform_random`` does so
    only when fed the policy's own generator across a whole run.
    """
    k = snapshot.k
    if policy.kind == "jsq":
        return int(np.argmin(snapshot.waiting))
    if policy.kind == "round_robin":
        return snapshot.job_index % k
    if policy.kind == "all_to_one":
        return policy.target
    if policy.kind == "uniform_random":
        rng = rng if rng is not None else policy.rng()
        return int(rng.integers(0, k))
    return policy.assignment[snapshot.job_index]
