"""Available-bandwidth traces and exact transfer timing.

A trace is a piecewise-constant bandwidth function: sample ``k`` holds on
``[t_k, t_{k+1})`` and the last sample holds until ``end_time``.  Units are
abstract data-units per second.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, TraceFormatError, ValidationError

__all__ = [
    "ThroughputTrace",
    "SyntheticTraceSpec",
    "Incomplete",
    "load_trace",
    "save_trace",
    "synth_markov_trace",
    "transfer_completion",
]


class Incomplete(NamedTuple):
    """Transfer still running when the trace ended."""

    delivered: float
    end_time: float


@dataclass(frozen=True, eq=False)
class ThroughputTrace:
    times: np.ndarray
    bandwidths: np.ndarray
    end_time: float

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        bws = np.array(self.bandwidths, dtype=np.float64)
        if times.ndim != 1 or times.shape != bws.shape:
            raise ValidationError("times and bandwidths must be 1-d and equal length")
        if times.size == 0:
            raise ValidationError("trace has no samples")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(bws))):
            raise ValidationError("trace contains non-finite values")
        if times[0] != 0.0:
            raise ValidationError(f"first sample time must be 0, got {times[0]!r}")
        bad = np.flatnonzero(np.diff(times) <= 0)
        if bad.size:
            raise ValidationError(f"non-increasing time at sample {bad[0] + 1}")
        nonpos = np.flatnonzero(bws <= 0)
        if nonpos.size:
            raise ValidationError(f"non-positive bandwidth at sample {nonpos[0]}")
        end_time = float(self.end_time)
        if not end_time >= times[-1] or end_time <= 0:
            raise ValidationError("end_time must be positive and >= last sample time")
        times.setflags(write=False)
        bws.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "bandwidths", bws)
        object.__setattr__(self, "end_time", end_time)

    def __len__(self):
        return self.times.shape[0]

    @cached_property
    def _cumulative(self):
        return _kernels._cumulative(self.times, self.bandwidths, self.end_time)

    def bandwidth_at(self, t: float) -> float:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.bandwidths[max(k, 0)])

    def integrate(self, a: float, b: float) -> float:
        """Data-units deliverable on ``[a, b]``; the last sample extends past end_time."""
        knots = np.append(self.times, max(self.end_time, b))
        lo = np.clip(knots[:-1], a, b)
        hi = np.clip(knots[1:], a, b)
        return math.fsum(self.bandwidths * (hi - lo))

    def window(self, start: float, stop: float) -> np.ndarray:
        """Bandwidth samples whose time falls in ``[start, stop)``."""
        mask = (self.times >= start) & (self.times < stop)
        return self.bandwidths[mask]

    def transfer_completion(self, start: float, size: float):
        return transfer_completion(self, start, size)


def transfer_completion(trace: ThroughputTrace, start: float, size: float):
    """Finish time of a transfer of ``size`` units beginning at ``start``.

    Returns a float when the transfer completes (completions that land within
    1e-9 s past ``end_time`` still count), otherwise :class:`Incomplete`
    carrying the units delivered by ``end_time``.
    """
    if not (0.0 <= start < trace.end_time):
        raise DomainError(f"start {start!r} outside [0, {trace.end_time!r})")
    if not size > 0:
        raise DomainError(f"transfer size must be positive, got {size!r}")
    done, t, delivered = _kernels.transfer(
        trace.times, trace.bandwidths, trace.end_time, float(start), float(size),
        None if _kernels.use_numba() else trace._cumulative,
    )
    if done:
        return float(t)
    return Incomplete(float(delivered), trace.end_time)


# ---------------------------------------------------------------------------
# CSV I/O


def _parse_lines(lines):
    times, bws = [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if not times and [p.lower() for p in parts] == ["time", "bandwidth"]:
            continue
        if len(parts) != 2:
            raise TraceFormatError(f"expected 2 fields, got {len(parts)}", lineno)
        try:
            t, b = float(parts[0]), float(parts[1])
        except ValueError:
            raise TraceFormatError(f"not a number: {line!r}", lineno) from None
        if not (math.isfinite(t) and math.isfinite(b)):
            raise TraceFormatError(f"non-finite value: {line!r}", lineno)
        if b <= 0:
            raise ValidationError(f"line {lineno}: non-positive bandwidth {b!r}")
        if times and t <= times[-1]:
            raise ValidationError(f"line {lineno}: non-increasing time {t!r}")
        times.append(t)
        bws.append(b)
    return times, bws


def load_trace(path, end_time: float | None = None) -> ThroughputTrace:
    """Read a ``time,bandwidth`` CSV trace.

    ``end_time`` defaults to the last sample time plus the median gap between
    samples (1.0 for a single-sample file).
    """
    with open(path, encoding="utf-8", newline="") as fh:
        times, bws = _parse_lines(fh.read().splitlines())
    if not times:
        raise ValidationError(f"{path}: trace has no samples")
    if end_time is None:
        gap = float(np.median(np.diff(times))) if len(times) > 1 else 1.0
        end_time = times[-1] + gap
    return ThroughputTrace(np.array(times), np.array(bws), end_time)


def format_trace(trace: ThroughputTrace) -> str:
    # repr() gives the shortest decimal that round-trips exactly
    rows = ["time,bandwidth"]
    rows += [f"{float(t)!r},{float(b)!r}" for t, b in zip(trace.times, trace.bandwidths)]
    return "\n".join(rows) + "\n"


def save_trace(trace: ThroughputTrace, path) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_trace(trace))
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# synthetic Markov traces


@dataclass(frozen=True)
class SyntheticTraceSpec:
    state_bandwidths: Sequence[float]
    transition_matrix: Sequence[Sequence[float]]
    sample_interval: float = 1.0
    duration: float = 100.0
    noise_fraction: float = 0.0
    seed: int = 0
    start_state: int = 0

    def __post_init__(self):
        bws = np.asarray(self.state_bandwidths, dtype=float)
        P = np.asarray(self.transition_matrix, dtype=float)
        n = bws.shape[0]
        if bws.ndim != 1 or n == 0 or np.any(~np.isfinite(bws)) or np.any(bws <= 0):
            raise ValidationError("state bandwidths must be a non-empty list of positive numbers")
        if P.shape != (n, n):
            raise ValidationError(f"transition matrix must be {n}x{n}, got {P.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
            raise ValidationError("transition matrix rows must be non-negative and sum to 1")
        if not (self.sample_interval > 0 and self.duration > 0):
            raise ValidationError("sample_interval and duration must be positive")
        if not (0 <= self.noise_fraction < 1):
            raise ValidationError("noise_fraction must lie in [0, 1)")
        if int(self.seed) < 0:
            raise ValidationError("seed must be non-negative")
        if not (0 <= self.start_state < n):
            raise ValidationError(f"start_state must be in [0, {n})")

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.duration / self.sample_interval + 1e-9))


def synth_markov_trace(spec: SyntheticTraceSpec) -> ThroughputTrace:
    """Walk the state chain, one sample per ``sample_interval``.

    Each sample's bandwidth is the current state's level scaled by
    ``1 + u`` with ``u ~ U[-noise, +noise]``.  Identical specs produce
    bit-identical traces.
    """
    n = spec.n_samples
    if n == 0:
        raise ValidationError("duration shorter than one sample interval")
    levels = np.asarray(spec.state_bandwidths, dtype=float)
    cum = np.cumsum(np.asarray(spec.transition_matrix, dtype=float), axis=1)
    rng = np.random.default_rng(int(spec.seed))
    step_draws = rng.random(n)
    noise = rng.uniform(-spec.noise_fraction, spec.noise_fraction, size=n)

    states = np.empty(n, dtype=np.int64)
    s = spec.start_state
    last = cum.shape[1] - 1
    for i in range(n):
        states[i] = s
        s = min(int(np.searchsorted(cum[s], step_draws[i], side="right")), last)
    bws = levels[states] * (1.0 + noise)
    times = np.arange(n) * float(spec.sample_interval)
    return ThroughputTrace(times, bws, n * float(spec.sample_interval))


def concat_traces(first: ThroughputTrace, second: ThroughputTrace) -> ThroughputTrace:
    """Append ``second`` after ``first.end_time`` (e.g. to model a regime shift)."""
    times = np.concatenate((first.times, second.times + first.end_time))
    bws = np.concatenate((first.bandwidths, second.bandwidths))
    return ThroughputTrace(times, bws, first.end_time + second.end_time)
