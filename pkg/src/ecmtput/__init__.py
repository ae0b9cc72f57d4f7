"""Throughput prediction for live video uplinks: AM and ECM predictors,
a trace-driven Stop-And-Wait simulator, and evaluation metrics."""
from .errors import (DomainError, EcmtputError, InsufficientDataError, TraceFormatError,
                     ValidationError)
from .metrics import CoverageReport, interval_coverage, nrmse, summarize
from .predictor import (AmPredictor, BinningScheme, ContingencyMatrix, EcmPredictor,
                        PredictionInterval, bin_index, bin_representative, fit_binning,
                        load_snapshot, save_snapshot)
from .simulator import (AmSpec, EcmSpec, FrameRecord, Outcome, SimConfig, SimulationResult,
                        frame_size_for, run_simulation)
from .trace import (Incomplete, SyntheticTraceSpec, ThroughputTrace, load_trace, save_trace,
                    synth_markov_trace, transfer_completion)

__version__ = "0.1.0"
