"""Arrival-process generators and trace files.

Trace files hold one JSON object per line, ``{"t": <seconds>}`` with an
optional ``"bucket": <int>``, sorted by ``t``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import ArrivalTrace

KINDS = ("poisson", "deterministic", "onoff")


@dataclass(frozen=True)
class GeneratorSpec:
    """Workload description.

    ``poisson``: ``rate`` (lambda). ``deterministic``: ``interval`` and
    ``offset``. ``onoff``: bursts of ``burst_size`` jobs spaced ``intra_gap``
    apart, with ``burst_gap`` idle seconds between the last job of a burst
    and the first of the next.
    """

    kind: str
    n: int = 0
    seed: int = 0
    rate: float | None = None
    interval: float | None = None
    offset: float = 0.0
    burst_size: int | None = None
    intra_gap: float = 0.0
    burst_gap: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.kind == "poisson" and not (self.rate is not None and self.rate > 0):
            raise ValueError("poisson workload needs rate > 0")
        if self.kind == "deterministic":
            if not (self.interval is not None and self.interval > 0):
                raise ValueError("deterministic workload needs interval > 0")
            if self.offset < 0:
                raise ValueError("offset must be >= 0")
        if self.kind == "onoff":
            if self.burst_size is None or self.burst_size < 1:
                raise ValueError("onoff workload needs burst_size >= 1")
            if self.burst_gap is None or self.burst_gap < 0 or self.intra_gap < 0:
                raise ValueError("onoff gaps must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        fields = set(cls.__dataclass_fields__)
        unknown = set(d) - fields
        if unknown:
            raise ValueError(f"unknown workload keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def generate(spec: GeneratorSpec) -> ArrivalTrace:
    n = spec.n
    if spec.kind == "poisson":
        rng = np.random.default_rng(spec.seed)
        return ArrivalTrace(np.cumsum(rng.exponential(1.0 / spec.rate, size=n)))
    if spec.kind == "deterministic":
        return ArrivalTrace(spec.offset + spec.interval * np.arange(n))
    m = spec.burst_size
    j = np.arange(n)
    period = (m - 1) * spec.intra_gap + spec.burst_gap
    return ArrivalTrace((j // m) * period + (j % m) * spec.intra_gap)


def write_trace(trace: ArrivalTrace | Sequence[float], path, assignment=None) -> None:
    times = trace.times if isinstance(trace, ArrivalTrace) else ArrivalTrace(trace).times
    if assignment is not None and len(assignment) != times.size:
        raise ValueError("assignment length does not match trace length")
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for i, t in enumerate(times.tolist()):
            rec = {"t": t}
            if assignment is not None:
                rec["bucket"] = int(assignment[i])
            fh.write(json.dumps(rec) + "\n")


class TraceFormatError(ValueError):
    pass


def read_trace(path) -> tuple[ArrivalTrace, np.ndarray | None]:
    """Return the trace and the embedded assignment (``None`` if no line has one)."""
    times: list[float] = []
    buckets: list[int | None] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t = float(rec["t"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: malformed trace record ({exc})") from None
            if not np.isfinite(t) or t < 0:
                raise TraceFormatError(f"{path}:{lineno}: time must be finite and >= 0")
            if times and t < times[-1]:
                raise TraceFormatError(f"{path}:{lineno}: times not sorted ({t!r} < {times[-1]!r})")
            b = rec.get("bucket")
            if b is not None and (not isinstance(b, int) or isinstance(b, bool) or b < 0):
                raise TraceFormatError(f"{path}:{lineno}: bucket must be an integer >= 0")
            times.append(t)
            buckets.append(b)
    assignment = None
    if any(b is not None for b in buckets):
        if any(b is None for b in buckets):
            raise TraceFormatError(f"{path}: bucket given on some records but not all")
        assignment = np.array(buckets, dtype=np.int64)
    return ArrivalTrace(times), assignment
