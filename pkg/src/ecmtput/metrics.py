"""Evaluation measures: NRMSE, loss/utilization summaries, interval coverage."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .simulator import Outcome, SimulationResult


def _pairs(series) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("prediction series must be a sequence of (predicted, realized) pairs")
    return arr[:, 0], arr[:, 1]


def nrmse(series=None, *, predicted=None, realized=None) -> float:
    """Root-mean-square error normalized by the mean realized value.

    Accepts either a sequence of ``(predicted, realized)`` pairs or the two
    arrays as keywords.
    """
    if series is not None:
        predicted, realized = _pairs(series)
    else:
        predicted = np.asarray(predicted, dtype=float)
        realized = np.asarray(realized, dtype=float)
    if predicted.shape != realized.shape or predicted.size == 0:
        raise DomainError("nrmse needs a non-empty series of matching length")
    mean = float(np.mean(realized))
    if not mean > 0:
        raise DomainError(f"mean realized value must be positive, got {mean!r}")
    rmse = math.sqrt(float(np.mean((realized - predicted) ** 2)))
    return rmse / mean


@dataclass(frozen=True)
class CoverageReport:
    nominal_level: float
    hits: int
    total: int
    mean_width: float = float("nan")

    @property
    def coverage(self) -> float:
        return self.hits / self.total


def interval_coverage(intervals, realized, nominal_level: float | None = None) -> CoverageReport:
    """Fraction of realized values falling in ``(low, high]``.

    ``intervals`` is a sequence of objects with ``low``/``high`` attributes or
    a ``(lows, highs)`` pair of arrays.
    """
    realized = np.asarray(realized, dtype=float)
    if isinstance(intervals, tuple) and len(intervals) == 2 and np.ndim(intervals[0]) == 1:
        lows = np.asarray(intervals[0], dtype=float)
        highs = np.asarray(intervals[1], dtype=float)
    else:
        intervals = list(intervals)
        lows = np.array([iv.low for iv in intervals], dtype=float)
        highs = np.array([iv.high for iv in intervals], dtype=float)
        if nominal_level is None and intervals:
            nominal_level = intervals[0].nominal_level
    if lows.shape != realized.shape:
        raise DomainError(f"{lows.shape[0]} intervals for {realized.shape[0]} realized values")
    if realized.size == 0:
        raise DomainError("coverage needs at least one interval")
    hits = int(np.count_nonzero((lows < realized) & (realized <= highs)))
    return CoverageReport(
        float("nan") if nominal_level is None else float(nominal_level),
        hits, int(realized.size), float(np.mean(highs - lows)),
    )


def _window_stats(frames, prefix=""):
    generated = len(frames)
    sent = [f for f in frames if f.outcome is Outcome.SENT]
    lost = sum(f.outcome is Outcome.LOST for f in frames)
    pairs = [(f.predicted, f.measured) for f in sent]
    return {
        f"{prefix}generated": generated,
        f"{prefix}sent": len(sent),
        f"{prefix}lost": lost,
        f"{prefix}in_flight": generated - len(sent) - lost,
        f"{prefix}loss_rate": lost / generated if generated else None,
        f"{prefix}sum_frame_sizes": math.fsum(f.size for f in sent),
        f"{prefix}nrmse": nrmse(pairs) if pairs else None,
    }


def summarize(result: SimulationResult) -> dict:
    """Flat metric record for a run.

    Keys without prefix cover the whole run; ``eval_*`` keys cover frames
    generated at or after ``result.eval_start``.  NRMSE is ``None`` when
    there are no scored predictions.
    """
    out = _window_stats(result.frames)
    out.update(_window_stats(result.window(result.eval_start), "eval_"))
    out["eval_start"] = result.eval_start
    return out


# ---------------------------------------------------------------------------
# metric CSV

METRIC_COLUMNS = [
    "run_id", "predictor", "M", "K", "M_S", "fps", "s_min",
    "loss_rate", "sum_frame_sizes", "nrmse", "coverage", "alpha",
    "generated", "sent", "lost", "in_flight", "eval_start",
    "all_loss_rate", "all_sum_frame_sizes", "all_nrmse",
    "all_generated", "all_sent", "all_lost", "all_in_flight",
    "hits", "total", "skipped", "mean_width",
]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def format_metric_rows(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in METRIC_COLUMNS])
    return buf.getvalue()


def write_metric_rows(rows: Sequence[dict], path) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_metric_rows(rows))
    os.replace(tmp, path)
