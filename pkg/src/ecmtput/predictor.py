"""Throughput predictors: the arithmetic-mean baseline and the empirical
conditional mean (ECM) over a first-order Markov model of binned throughput.

Both predictors share a small state-machine contract::

    p.predict()          # estimate for the next measurement
    p.observe(c)         # feed the measurement that actually happened
    p.walk(values)       # predict-then-observe over a whole series (fast path)
"""
from __future__ import annotations

import copy
import math
import os
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, InsufficientDataError, TraceFormatError, ValidationError

DEFAULT_BINS = 32


@dataclass(frozen=True)
class BinningScheme:
    """Uniform partition of ``(lower, upper]`` into ``bin_count`` bins.

    Bin ``k`` (0-based) is ``(edges[k], edges[k+1]]``.  Values at or below
    ``lower`` fall in bin 0 and values above ``upper`` in the last bin.
    """

    lower: float
    upper: float
    bin_count: int = DEFAULT_BINS

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValidationError("binning bounds must be finite")
        if not self.lower < self.upper:
            raise ValidationError(f"lower ({self.lower}) must be < upper ({self.upper})")
        if int(self.bin_count) != self.bin_count or self.bin_count < 2:
            raise ValidationError(f"bin_count must be an integer >= 2, got {self.bin_count}")

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.linspace(self.lower, self.upper, self.bin_count + 1)
        e[0], e[-1] = self.lower, self.upper
        e.setflags(write=False)
        return e

    @cached_property
    def representatives(self) -> np.ndarray:
        e = self.edges
        mid = (e[:-1] + e[1:]) / 2.0
        mid.setflags(write=False)
        return mid

    @property
    def width(self) -> float:
        return (self.upper - self.lower) / self.bin_count

    def index(self, value: float) -> int:
        if not math.isfinite(value):
            raise DomainError(f"cannot bin non-finite value {value!r}")
        k = int(np.searchsorted(self.edges, value, side="left")) - 1
        return min(max(k, 0), self.bin_count - 1)

    def indices(self, values) -> np.ndarray:
        return _kernels.bin_indices(self.edges, values)

    def representative(self, k: int) -> float:
        if not 0 <= k < self.bin_count:
            raise DomainError(f"bin index {k} outside [0, {self.bin_count})")
        return float(self.representatives[k])


def bin_index(binning: BinningScheme, value: float) -> int:
    return binning.index(value)


def bin_representative(binning: BinningScheme, k: int) -> float:
    return binning.representative(k)


def fit_binning(training: Iterable[float], bins: int = DEFAULT_BINS) -> BinningScheme:
    """Span ``[min, max]`` of the training measurements with uniform bins."""
    arr = np.asarray(list(training) if not isinstance(training, np.ndarray) else training,
                     dtype=float)
    if arr.size == 0 or np.unique(arr).size < 2:
        raise InsufficientDataError("degenerate training data: need at least 2 distinct values")
    return BinningScheme(float(arr.min()), float(arr.max()), bins)


class ContingencyMatrix:
    """K x K transition counts with optional FIFO forgetting.

    ``counts[r, c]`` counts transitions from bin ``r`` (older measurement) to
    bin ``c`` (newer).  When ``cap`` is set, the grandsum never exceeds it:
    recording a new transition past the cap first retires the oldest one.
    """

    def __init__(self, bin_count: int, cap: int | None = None):
        if cap is not None and (int(cap) != cap or cap < 1):
            raise ValidationError(f"grandsum cap must be a positive integer or None, got {cap!r}")
        self.counts = np.zeros((bin_count, bin_count), dtype=np.int64)
        self.events: deque[tuple[int, int]] = deque()
        self.cap = None if cap is None else int(cap)

    @property
    def bin_count(self) -> int:
        return self.counts.shape[0]

    @property
    def grandsum(self) -> int:
        return len(self.events)

    def add(self, row: int, col: int) -> None:
        if self.cap is not None and len(self.events) >= self.cap:
            r, c = self.events.popleft()
            self.counts[r, c] -= 1
        self.events.append((row, col))
        self.counts[row, col] += 1

    def replay(self) -> np.ndarray:
        out = np.zeros_like(self.counts)
        for r, c in self.events:
            out[r, c] += 1
        return out

    def row(self, k: int) -> np.ndarray:
        if not 0 <= k < self.bin_count:
            raise DomainError(f"row {k} outside [0, {self.bin_count})")
        return self.counts[k]

    def _event_arrays(self, extra: int):
        n = len(self.events)
        ev_from = np.empty(n + extra, dtype=np.int64)
        ev_to = np.empty(n + extra, dtype=np.int64)
        if n:
            arr = np.array(self.events, dtype=np.int64)
            ev_from[:n], ev_to[:n] = arr[:, 0], arr[:, 1]
        return ev_from, ev_to, n

    def _set_events(self, ev_from, ev_to, head, tail):
        self.events = deque(zip(ev_from[head:tail].tolist(), ev_to[head:tail].tolist()))


@dataclass(frozen=True)
class PredictionInterval:
    low: float
    high: float
    nominal_level: float
    retained_mass: float

    def __contains__(self, value) -> bool:
        return self.low < value <= self.high

    @property
    def width(self) -> float:
        return self.high - self.low


class AmPredictor:
    """Moving average of the last ``window_size`` measurements.

    With fewer than ``window_size`` measurements it averages what it has; with
    none it returns ``fallback_initial``.
    """

    kind = "am"

    def __init__(self, window_size: int, fallback_initial: float = 0.0):
        if int(window_size) != window_size or window_size < 1:
            raise ValidationError(f"window size must be a positive integer, got {window_size!r}")
        self.window_size = int(window_size)
        self.window: deque[float] = deque(maxlen=self.window_size)
        self.fallback_initial = float(fallback_initial)

    @property
    def label(self) -> str:
        return f"am:{self.window_size}"

    def observe(self, c: float) -> None:
        self.window.append(float(c))

    def predict(self) -> float:
        if not self.window:
            return self.fallback_initial
        # shift by the oldest value so constant windows average exactly
        ref = self.window[0]
        return ref + math.fsum(x - ref for x in self.window) / len(self.window)

    def walk(self, values) -> np.ndarray:
        values = np.ascontiguousarray(values, dtype=np.float64)
        buf = np.zeros(self.window_size)
        n_window = len(self.window)
        buf[:n_window] = list(self.window)
        out = np.empty(values.shape[0])
        count = _kernels.am_walk(values, buf, n_window, self.window_size,
                                 self.fallback_initial, out)
        self.window = deque(buf[:count].tolist(), maxlen=self.window_size)
        return out

    def clone(self) -> "AmPredictor":
        return copy.deepcopy(self)


class EcmPredictor:
    """Empirical conditional mean over binned throughput transitions.

    The estimate for the next measurement is the mean of the bin
    representatives weighted by the empirical transition probabilities out of
    the bin holding the latest measurement.  Until that row has data the
    latest measurement itself is returned; before any measurement,
    ``fallback_initial``.
    """

    kind = "ecm"

    def __init__(self, binning: BinningScheme, cap: int | None = None,
                 fallback_initial: float = 0.0):
        self.binning = binning
        self.matrix = ContingencyMatrix(binning.bin_count, cap)
        self.last_observation: float | None = None
        self.last_bin: int | None = None
        self.fallback_initial = float(fallback_initial)

    @property
    def cap(self) -> int | None:
        return self.matrix.cap

    @property
    def label(self) -> str:
        cap = "inf" if self.cap is None else str(self.cap)
        return f"ecm:{self.binning.bin_count},{cap}"

    def observe(self, c: float) -> None:
        m = self.binning.index(c)
        if self.last_bin is not None:
            self.matrix.add(self.last_bin, m)
        self.last_observation = float(c)
        self.last_bin = m

    def train(self, values: Iterable[float]) -> None:
        self.walk(np.fromiter(values, dtype=float))

    def predict(self) -> float:
        if self.last_bin is None:
            return self.fallback_initial
        row = self.matrix.counts[self.last_bin]
        total = int(row.sum())
        if total == 0:
            return self.last_observation
        return float((row / total) @ self.binning.representatives)

    def row_distribution(self, k: int) -> np.ndarray | None:
        """Empirical Pr(next in bin j | current in bin k); None if row k is empty."""
        row = self.matrix.row(k)
        total = row.sum()
        if total == 0:
            return None
        return row / total

    def interval(self, alpha: float) -> PredictionInterval:
        """Central interval from the conditional row, trimming whole bins.

        Bins are dropped from each end while the mass dropped on that side
        stays within ``alpha / 2``; the interval covers what remains, so its
        retained mass is never below ``1 - alpha``.
        """
        if not 0 < alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
        if self.last_bin is None:
            raise InsufficientDataError("no observation yet")
        row = self.matrix.counts[self.last_bin]
        i, j, kept, total = _kernels.trim_row(row, alpha)
        if total == 0:
            raise InsufficientDataError(f"row {self.last_bin} has no transitions")
        e = self.binning.edges
        return PredictionInterval(float(e[i]), float(e[j + 1]), 1.0 - alpha, kept / total)

    def walk(self, values, learn: bool = True) -> np.ndarray:
        """Predict then observe each value in turn; returns the predictions.

        With ``learn=False`` the matrix is left untouched and only the
        conditioning bin advances.
        """
        values = np.ascontiguousarray(values, dtype=np.float64)
        n = values.shape[0]
        if n and not np.all(np.isfinite(values)):
            raise DomainError("cannot observe non-finite values")
        mat = self.matrix
        ev_from, ev_to, n_old = mat._event_arrays(n if learn else 0)
        counts = mat.counts.copy()
        out = np.empty(n)
        last_bin = -1 if self.last_bin is None else self.last_bin
        last_obs = np.nan if self.last_observation is None else self.last_observation
        head, tail = _kernels.ecm_walk(
            values, self.binning.edges, np.asarray(self.binning.representatives), counts,
            ev_from, ev_to, 0, n_old, -1 if mat.cap is None else mat.cap,
            last_bin, last_obs, self.fallback_initial, learn, out,
        )
        if n:
            mat.counts = counts
            if learn:
                mat._set_events(ev_from, ev_to, head, tail)
            self.last_observation = float(values[-1])
            self.last_bin = self.binning.index(values[-1])
        return out

    def interval_walk(self, values, alpha: float):
        """Intervals for each value of ``values`` from a frozen matrix.

        Returns ``(low, high, retained_mass)`` arrays; entries are NaN where
        the conditioning row is empty.  The conditioning bin advances to the
        last value.
        """
        if not 0 < alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
        values = np.ascontiguousarray(values, dtype=np.float64)
        n = values.shape[0]
        lows, highs = np.empty(n), np.empty(n)
        kept = np.empty(n, dtype=np.int64)
        totals = np.empty(n, dtype=np.int64)
        last_bin = -1 if self.last_bin is None else self.last_bin
        _kernels.interval_walk(values, self.binning.edges, self.matrix.counts, last_bin,
                               float(alpha), lows, highs, kept, totals)
        with np.errstate(invalid="ignore", divide="ignore"):
            mass = np.where(totals > 0, kept / np.maximum(totals, 1), np.nan)
        if n:
            self.last_observation = float(values[-1])
            self.last_bin = self.binning.index(values[-1])
        return lows, highs, mass

    def clone(self) -> "EcmPredictor":
        return copy.deepcopy(self)


def predict_series(predictor, values) -> np.ndarray:
    """One-step-ahead predictions for ``values`` (mutates ``predictor``)."""
    walk = getattr(predictor, "walk", None)
    if walk is not None:
        return walk(values)
    out = np.empty(len(values))
    for i, v in enumerate(values):
        out[i] = predictor.predict()
        predictor.observe(v)
    return out


# ---------------------------------------------------------------------------
# snapshot persistence


def format_snapshot(p: EcmPredictor) -> str:
    K = p.binning.bin_count
    cap = "inf" if p.cap is None else str(p.cap)
    head = (f"K,{K},grandsum,{p.matrix.grandsum},cap,{cap},"
            f"lower,{p.binning.lower!r},upper,{p.binning.upper!r}")
    rows = [",".join(str(int(v)) for v in r) for r in p.matrix.counts]
    return "\n".join([head, *rows]) + "\n"


def save_snapshot(p: EcmPredictor, path) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_snapshot(p))
    os.replace(tmp, path)


def parse_snapshot(text: str) -> tuple[dict, np.ndarray]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("empty snapshot")
    fields = lines[0].split(",")
    if len(fields) % 2:
        raise TraceFormatError("header must be key,value pairs", 1)
    header = dict(zip(fields[::2], fields[1::2]))
    try:
        K = int(header["K"])
        grandsum = int(header["grandsum"])
        cap = None if header["cap"] == "inf" else int(header["cap"])
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(f"bad snapshot header: {exc}", 1) from None
    if len(lines) != K + 1:
        raise TraceFormatError(f"expected {K} count rows, got {len(lines) - 1}")
    counts = np.zeros((K, K), dtype=np.int64)
    for r, ln in enumerate(lines[1:]):
        try:
            vals = [int(v) for v in ln.split(",")]
        except ValueError:
            raise TraceFormatError(f"non-integer count: {ln!r}", r + 2) from None
        if len(vals) != K or min(vals) < 0:
            raise TraceFormatError(f"row must hold {K} non-negative counts", r + 2)
        counts[r] = vals
    if cap is not None and grandsum > cap:
        raise ValidationError(f"grandsum {grandsum} exceeds cap {cap}")
    if int(counts.sum()) != grandsum:
        raise ValidationError(f"grandsum {grandsum} disagrees with counts ({counts.sum()})")
    meta = {"K": K, "grandsum": grandsum, "cap": cap,
            "lower": float(header["lower"]) if "lower" in header else None,
            "upper": float(header["upper"]) if "upper" in header else None}
    return meta, counts


def load_snapshot(path, lower: float | None = None, upper: float | None = None,
                  fallback_initial: float = 0.0) -> EcmPredictor:
    """Rebuild an ECM predictor from a snapshot file.

    The FIFO order of recorded transitions is not persisted; it is rebuilt in
    row-major order, so forgetting after a reload retires transitions in that
    order rather than by age.
    """
    with open(path, encoding="utf-8") as fh:
        meta, counts = parse_snapshot(fh.read())
    lo = meta["lower"] if lower is None else lower
    hi = meta["upper"] if upper is None else upper
    if lo is None or hi is None:
        raise ValidationError("snapshot lacks lower/upper bounds; pass them explicitly")
    p = EcmPredictor(BinningScheme(lo, hi, meta["K"]), meta["cap"], fallback_initial)
    p.matrix.counts = counts
    rows, cols = np.nonzero(counts)
    p.matrix.events = deque(
        (int(r), int(c)) for r, c in zip(rows, cols) for _ in range(int(counts[r, c]))
    )
    return p


__all__ = [
    "BinningScheme", "ContingencyMatrix", "PredictionInterval", "AmPredictor",
    "EcmPredictor", "bin_index", "bin_representative", "fit_binning",
    "predict_series", "save_snapshot", "load_snapshot", "format_snapshot",
    "parse_snapshot", "DEFAULT_BINS",
]
