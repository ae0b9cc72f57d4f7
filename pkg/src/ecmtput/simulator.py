"""Trace-driven Stop-And-Wait uplink simulation.

Frames are generated every ``1/fps`` seconds.  The uploader sends one frame
at a time, always picking the newest frame generated so far; frames that are
overtaken before being picked, or never picked before the trace ends, are
lost.  Each frame is sized so that, if the predicted throughput were exact,
its transfer would take exactly one frame interval.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, ValidationError
from .predictor import AmPredictor, EcmPredictor, fit_binning, DEFAULT_BINS
from .trace import Incomplete, ThroughputTrace

# event-time tie tolerance in seconds
TIME_TOL = 1e-9


@dataclass(frozen=True)
class AmSpec:
    window: int = 16

    @property
    def label(self) -> str:
        return f"am:{self.window}"


@dataclass(frozen=True)
class EcmSpec:
    """ECM built at simulation start.

    Bin bounds come from the trace bandwidth samples of the leading
    ``train_fraction`` of the run (the whole trace when the fraction is 0);
    the matrix itself learns online from the first measured throughput.
    That leading window is reported as warm-up.
    """

    bins: int = DEFAULT_BINS
    cap: int | None = None
    train_fraction: float = 0.5

    def __post_init__(self):
        if not 0 <= self.train_fraction < 1:
            raise ValidationError("train_fraction must lie in [0, 1)")

    @property
    def label(self) -> str:
        return f"ecm:{self.bins},{'inf' if self.cap is None else self.cap}"


@dataclass
class SimConfig:
    trace: ThroughputTrace
    fps: float
    min_frame_size: float = 0.0
    predictor: object = field(default_factory=lambda: AmSpec(1))
    # None -> bandwidth of the first trace sample
    fallback_initial: float | None = None
    # start of the evaluation window in seconds; None -> ECM train window end, else 0
    eval_start: float | None = None

    def __post_init__(self):
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise ValidationError(f"fps must be positive, got {self.fps!r}")
        if not self.min_frame_size >= 0:
            raise ValidationError(f"min_frame_size must be >= 0, got {self.min_frame_size!r}")
        if self.fallback_initial is not None and not self.fallback_initial > 0:
            raise ValidationError("fallback_initial must be positive")


class Outcome(str, Enum):
    SENT = "sent"
    LOST = "lost"
    IN_FLIGHT = "in_flight"


@dataclass
class FrameRecord:
    index: int
    generated_at: float
    outcome: Outcome = Outcome.LOST
    size: float | None = None
    start: float | None = None
    completed: float | None = None
    measured: float | None = None
    predicted: float | None = None


@dataclass
class SimulationResult:
    frames: list[FrameRecord]
    fps: float
    end_time: float
    eval_start: float
    predictor_label: str
    clamped_predictions: int = 0

    @property
    def generated_count(self) -> int:
        return len(self.frames)

    @property
    def sent_count(self) -> int:
        return sum(f.outcome is Outcome.SENT for f in self.frames)

    @property
    def lost_count(self) -> int:
        return sum(f.outcome is Outcome.LOST for f in self.frames)

    @property
    def in_flight_count(self) -> int:
        return sum(f.outcome is Outcome.IN_FLIGHT for f in self.frames)

    @property
    def sum_frame_sizes(self) -> float:
        return math.fsum(f.size for f in self.frames if f.outcome is Outcome.SENT)

    @property
    def loss_rate(self) -> float:
        n = self.generated_count
        return self.lost_count / n if n else 0.0

    @property
    def predictions(self) -> np.ndarray:
        """(predicted, realized) throughput for every sent frame, in order."""
        sent = [f for f in self.frames if f.outcome is Outcome.SENT]
        return np.array([(f.predicted, f.measured) for f in sent], dtype=float).reshape(-1, 2)

    def window(self, start: float) -> list[FrameRecord]:
        return [f for f in self.frames if f.generated_at >= start - TIME_TOL]


def frame_size_for(predicted: float, fps: float, min_frame_size: float) -> float:
    """Size whose transfer lasts one frame interval at the predicted rate."""
    if not predicted > 0:
        return min_frame_size
    return max(min_frame_size, predicted / fps)


def build_predictor(config: SimConfig):
    """Instantiate the configured predictor; returns ``(predictor, eval_start)``."""
    spec = config.predictor
    trace = config.trace
    fallback = config.fallback_initial
    if fallback is None:
        fallback = float(trace.bandwidths[0])
    eval_start = 0.0
    if isinstance(spec, AmSpec):
        p = AmPredictor(spec.window, fallback)
    elif isinstance(spec, EcmSpec):
        if spec.train_fraction > 0:
            eval_start = spec.train_fraction * trace.end_time
            sample = trace.window(0.0, eval_start)
        else:
            sample = trace.bandwidths
        p = EcmPredictor(fit_binning(sample, spec.bins), spec.cap, fallback)
    elif hasattr(spec, "predict") and hasattr(spec, "observe"):
        p = spec.clone() if hasattr(spec, "clone") else spec
    else:
        raise ValidationError(f"unsupported predictor spec {spec!r}")
    if config.eval_start is not None:
        eval_start = float(config.eval_start)
    return p, eval_start


def _newest_generated(t: float, fps: float, n_frames: int) -> int:
    """Largest frame index with generation time <= t (within tolerance)."""
    i = int(math.floor((t + TIME_TOL) * fps))
    while i + 1 < n_frames and (i + 1) / fps <= t + TIME_TOL:
        i += 1
    while i >= 0 and i / fps > t + TIME_TOL:
        i -= 1
    return min(i, n_frames - 1)


def run_simulation(config: SimConfig) -> SimulationResult:
    trace = config.trace
    fps = float(config.fps)
    end = trace.end_time
    predictor, eval_start = build_predictor(config)
    label = getattr(predictor, "label", type(predictor).__name__)

    # only frames whose whole generation interval fits in the trace
    n_frames = int(math.floor(end * fps + TIME_TOL))
    frames = [FrameRecord(i, i / fps) for i in range(n_frames)]
    result = SimulationResult(frames, fps, end, eval_start, label)

    next_free = 0  # frames below this index were taken or overtaken
    t = 0.0
    while next_free < n_frames and t < end - TIME_TOL:
        newest = _newest_generated(t, fps, n_frames)
        if newest < next_free:
            t = next_free / fps
            continue
        rec = frames[newest]
        next_free = newest + 1
        start = max(t, rec.generated_at)
        if start >= end:
            break
        predicted = predictor.predict()
        if not predicted > 0:
            result.clamped_predictions += 1
        size = frame_size_for(predicted, fps, config.min_frame_size)
        if not size > 0:
            raise DomainError("frame size is zero; set min_frame_size or a positive fallback")
        finish = trace.transfer_completion(start, size)
        rec.size, rec.start, rec.predicted = size, start, predicted
        if isinstance(finish, Incomplete):
            rec.outcome = Outcome.IN_FLIGHT
            break
        measured = size / (finish - start)
        rec.outcome = Outcome.SENT
        rec.completed, rec.measured = finish, measured
        predictor.observe(measured)
        t = finish
    return result


# ---------------------------------------------------------------------------
# per-frame event log

FRAME_LOG_COLUMNS = ["index", "generated_at", "outcome", "size", "start",
                     "completed", "measured_C", "predicted_C"]


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def format_frame_log(result: SimulationResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FRAME_LOG_COLUMNS)
    for f in result.frames:
        w.writerow([f.index, repr(f.generated_at), f.outcome.value, _fmt(f.size),
                    _fmt(f.start), _fmt(f.completed), _fmt(f.measured), _fmt(f.predicted)])
    return buf.getvalue()


def write_frame_log(result: SimulationResult, path) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_frame_log(result))
    os.replace(tmp, path)
