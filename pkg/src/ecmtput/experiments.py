"""Experiment drivers shared by the CLI and the acceptance suite."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .metrics import CoverageReport, interval_coverage, summarize
from .predictor import DEFAULT_BINS, EcmPredictor, fit_binning
from .simulator import AmSpec, EcmSpec, SimConfig, run_simulation


@dataclass
class CoverageStudy:
    predictor: EcmPredictor  # state after training, before the test walk
    reports: dict[float, CoverageReport]
    skipped: dict[float, int]  # test steps whose conditioning row was empty
    n_train: int
    n_test: int


def coverage_study(values, alphas, split: float = 0.5, bins: int = DEFAULT_BINS,
                   cap: int | None = None) -> CoverageStudy:
    """Train ECM on the leading ``split`` share of ``values``, score the rest.

    For each alpha the trained matrix is frozen and every test value is
    checked against the interval issued from the preceding value's bin.
    """
    values = np.asarray(values, dtype=float)
    if not 0 < split < 1:
        raise ValidationError(f"split must lie in (0, 1), got {split!r}")
    n_train = int(round(split * values.size))
    train, test = values[:n_train], values[n_train:]
    if train.size < 2 or test.size < 1:
        raise InsufficientDataError(
            f"need >= 2 training and >= 1 test values, got {train.size}/{test.size}")
    ecm = EcmPredictor(fit_binning(train, bins), cap)
    ecm.walk(train)

    reports, skipped = {}, {}
    for alpha in alphas:
        p = ecm.clone()
        lows, highs, _ = p.interval_walk(test, alpha)
        issued = ~np.isnan(lows)
        if not issued.any():
            raise InsufficientDataError("no interval could be issued on the test window")
        rep = interval_coverage((lows[issued], highs[issued]), test[issued], 1.0 - alpha)
        reports[alpha] = rep
        skipped[alpha] = int((~issued).sum())
    return CoverageStudy(ecm, reports, skipped, int(train.size), int(test.size))


def spec_fields(spec) -> dict:
    if isinstance(spec, AmSpec):
        return {"predictor": spec.label, "M": spec.window}
    if isinstance(spec, EcmSpec):
        return {"predictor": spec.label, "K": spec.bins,
                "M_S": "inf" if spec.cap is None else spec.cap}
    return {"predictor": getattr(spec, "label", type(spec).__name__)}


def metric_row(run_id, spec, fps, s_min, result) -> dict:
    """Metric CSV row; headline columns cover the evaluation window."""
    s = summarize(result)
    row = {"run_id": run_id, **spec_fields(spec), "fps": fps, "s_min": s_min}
    for key in ("loss_rate", "sum_frame_sizes", "nrmse", "generated", "sent", "lost",
                "in_flight"):
        row[key] = s[f"eval_{key}"]
        row[f"all_{key}"] = s[key]
    row["eval_start"] = s["eval_start"]
    return row


def sweep(trace, predictors, fps_values, smin_values, split: float = 0.0,
          fallback_initial: float | None = None):
    """Run every (predictor, fps, s_min) combination in grid order.

    Yields ``(run_id, spec, fps, s_min, result)``.  All runs share the
    evaluation window starting at ``split * trace.end_time``.
    """
    eval_start = split * trace.end_time
    grid = itertools.product(predictors, fps_values, smin_values)
    for run_id, (spec, fps, s_min) in enumerate(grid, start=1):
        if isinstance(spec, EcmSpec) and spec.train_fraction != split:
            spec = EcmSpec(spec.bins, spec.cap, split)
        cfg = SimConfig(trace, fps, s_min, spec, fallback_initial, eval_start)
        yield run_id, spec, fps, s_min, run_simulation(cfg)
