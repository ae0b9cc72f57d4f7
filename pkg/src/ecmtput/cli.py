"""Command-line experiment driver.

    ecmtput synth    --bandwidths 1000,200 --transitions "0.9,0.1;0.1,0.9" --out trace.csv
    ecmtput simulate --trace trace.csv --fps 10 --predictor am:16 --predictor ecm:32,inf --out runs.csv
    ecmtput coverage --trace trace.csv --split 0.5 --alpha 0.05,0.2 --out coverage.csv
    ecmtput dump-row --state matrix.csv --row 3 --out row.csv

Every subcommand also accepts ``--config FILE`` with ``key=value`` lines
(keys are long option names, e.g. ``fps=10``); command-line flags win.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys

import numpy as np

from .errors import DomainError, InsufficientDataError, TraceFormatError, ValidationError
from .experiments import coverage_study, metric_row, sweep
from .metrics import format_metric_rows
from .predictor import DEFAULT_BINS, load_snapshot, save_snapshot
from .simulator import AmSpec, EcmSpec, format_frame_log
from .trace import SyntheticTraceSpec, format_trace, load_trace, synth_markov_trace

log = logging.getLogger("ecmtput")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_VALIDATION = 4

DEFAULTS = {
    "interval": 1.0,
    "duration": 10000.0,
    "noise": 0.0,
    "seed": 0,
    "start_state": 0,
    "fps": "10",
    "smin_start": 0.0,
    "smin_stop": None,
    "smin_step": None,
    "alpha": "0.05",
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing helpers


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--{what}: expected comma-separated numbers, got {text!r}") from None


def _matrix(text: str) -> list[list[float]]:
    rows = [r for r in str(text).split(";") if r.strip()]
    return [_floats(r, "transitions") for r in rows]


def parse_predictor(text: str):
    """``am:M`` or ``ecm:K,M_S`` (``M_S`` may be ``inf``; both parts optional)."""
    kind, _, rest = text.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == "am":
            return AmSpec(int(rest) if rest else 16)
        if kind == "ecm":
            parts = [p.strip() for p in rest.split(",")] if rest else []
            bins = int(parts[0]) if parts and parts[0] else DEFAULT_BINS
            cap = None
            if len(parts) > 1 and parts[1].lower() not in ("", "inf", "none"):
                cap = int(parts[1])
            return EcmSpec(bins, cap)
    except ValueError:
        pass
    raise UsageError(f"--predictor: expected am:M or ecm:K,M_S, got {text!r}")


def _sweep_values(start, stop, step) -> list[float]:
    if stop is None:
        return [start]
    if step is None or step <= 0:
        raise UsageError("--smin-step must be positive when --smin-stop is given")
    if stop < start:
        raise UsageError("--smin-stop must be >= --smin-start")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [start + i * step for i in range(n + 1)]


def read_config(path) -> list[str]:
    """Turn ``key=value`` lines into ``--key value`` arguments."""
    argv = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise TraceFormatError(f"expected key=value, got {line!r}", lineno)
            key = key.strip().replace("_", "-")
            argv += [f"--{key}", value.strip()]
    return argv


def _add_trace_source(p):
    g = p.add_argument_group("trace source (file or synthetic)")
    g.add_argument("--trace", help="trace CSV (time,bandwidth)")
    g.add_argument("--states", type=int, help="number of synthetic states (checked)")
    g.add_argument("--bandwidths", help="synthetic state bandwidths, e.g. 1000,200")
    g.add_argument("--transitions", help='row-stochastic matrix, rows split by ";"')
    g.add_argument("--interval", type=float, help="synthetic sample interval [s]")
    g.add_argument("--duration", type=float, help="synthetic duration [s]")
    g.add_argument("--noise", type=float, help="multiplicative uniform noise half-width")
    g.add_argument("--seed", type=int, help="RNG seed")
    g.add_argument("--start-state", type=int, help="initial synthetic state")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecmtput", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic Markov trace")
    _add_trace_source(p)
    p.add_argument("--out", help="output trace CSV")

    p = sub.add_parser("simulate", help="run Stop-And-Wait simulations over a grid")
    _add_trace_source(p)
    p.add_argument("--fps", help="frames per second (comma list)")
    p.add_argument("--smin-start", type=float)
    p.add_argument("--smin-stop", type=float, help="inclusive")
    p.add_argument("--smin-step", type=float)
    p.add_argument("--predictor", action="append", help="am:M or ecm:K,M_S (repeatable)")
    p.add_argument("--split", type=float, help="warm-up share of the run (default 0.5)")
    p.add_argument("--fallback", type=float, help="prediction before any measurement")
    p.add_argument("--out", help="metric CSV")
    p.add_argument("--frame-log", help="per-frame CSV; run id is appended for grids")

    p = sub.add_parser("coverage", help="confidence-interval coverage study")
    _add_trace_source(p)
    p.add_argument("--predictor", action="append", help="ecm:K,M_S (default ecm:32,inf)")
    p.add_argument("--alpha", help="significance levels (comma list)")
    p.add_argument("--split", type=float, help="training share (default 0.5)")
    p.add_argument("--save-state", help="write the trained matrix snapshot here")
    p.add_argument("--out", help="coverage CSV")

    p = sub.add_parser("dump-row", help="conditional distribution of one matrix row")
    p.add_argument("--state", help="matrix snapshot CSV")
    p.add_argument("--row", type=int, help="conditioning bin index")
    p.add_argument("--lower", type=float, help="override snapshot lower bound")
    p.add_argument("--upper", type=float, help="override snapshot upper bound")
    p.add_argument("--out", help="row CSV")

    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sp in action.choices.values():
                sp.add_argument("--config", help="key=value defaults file")
    return parser


def _merge(parser, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        file_args = parser.parse_args([args.command, *read_config(args.config)])
        for key, value in vars(file_args).items():
            if getattr(args, key, None) is None:
                setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key, "missing") is None:
            setattr(args, key, value)
    return args


# ---------------------------------------------------------------------------
# output helpers


def _write_atomic(path, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _emit(args, text: str) -> None:
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _trace_from_args(args):
    if args.trace:
        if args.bandwidths or args.transitions:
            raise UsageError("give either --trace or synthetic flags, not both")
        return load_trace(args.trace)
    return synth_markov_trace(_synth_spec(args))


def _synth_spec(args) -> SyntheticTraceSpec:
    if not args.bandwidths:
        raise UsageError("need --trace or --bandwidths (synthetic trace)")
    bws = _floats(args.bandwidths, "bandwidths")
    if args.states is not None and args.states != len(bws):
        raise UsageError(f"--states {args.states} but {len(bws)} bandwidths given")
    trans = _matrix(args.transitions) if args.transitions else np.eye(len(bws)).tolist()
    return SyntheticTraceSpec(bws, trans, args.interval, args.duration, args.noise,
                              args.seed, args.start_state)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    trace = synth_markov_trace(_synth_spec(args))
    _emit(args, format_trace(trace))
    return EXIT_OK


def cmd_simulate(args) -> int:
    trace = _trace_from_args(args)
    predictors = [parse_predictor(s) for s in (args.predictor or ["am:16", "ecm"])]
    fps_values = _floats(args.fps, "fps")
    smins = _sweep_values(args.smin_start, args.smin_stop, args.smin_step)
    split = 0.5 if args.split is None else args.split
    if not 0 <= split < 1:
        raise ValidationError("--split must lie in [0, 1)")
    rows, logs = [], []
    for run_id, spec, fps, s_min, result in sweep(trace, predictors, fps_values, smins,
                                                  split, args.fallback):
        rows.append(metric_row(run_id, spec, fps, s_min, result))
        if args.frame_log:
            logs.append((run_id, format_frame_log(result)))
        log.info("run %d %s fps=%g s_min=%g loss=%.4f", run_id, spec.label, fps, s_min,
                 rows[-1]["loss_rate"] or 0.0)
    _emit(args, format_metric_rows(rows))
    if args.frame_log:
        if len(logs) == 1:
            _write_atomic(args.frame_log, logs[0][1])
        else:
            stem, ext = os.path.splitext(args.frame_log)
            for run_id, text in logs:
                _write_atomic(f"{stem}.run{run_id}{ext or '.csv'}", text)
    return EXIT_OK


def cmd_coverage(args) -> int:
    trace = _trace_from_args(args)
    specs = [parse_predictor(s) for s in (args.predictor or ["ecm"])]
    if len(specs) != 1 or not isinstance(specs[0], EcmSpec):
        raise UsageError("coverage takes exactly one ecm:K,M_S predictor")
    spec = specs[0]
    alphas = _floats(args.alpha, "alpha")
    for a in alphas:
        if not 0 < a < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {a}")
    split = 0.5 if args.split is None else args.split
    study = coverage_study(trace.bandwidths, alphas, split, spec.bins, spec.cap)
    rows = []
    for run_id, alpha in enumerate(alphas, start=1):
        rep = study.reports[alpha]
        rows.append({
            "run_id": run_id, "predictor": spec.label, "K": spec.bins,
            "M_S": "inf" if spec.cap is None else spec.cap,
            "coverage": rep.coverage, "alpha": alpha, "hits": rep.hits,
            "total": rep.total, "skipped": study.skipped[alpha], "mean_width": rep.mean_width,
        })
    _emit(args, format_metric_rows(rows))
    if args.save_state:
        save_snapshot(study.predictor, args.save_state)
    return EXIT_OK


def cmd_dump_row(args) -> int:
    if args.state is None or args.row is None:
        raise UsageError("dump-row needs --state and --row")
    p = load_snapshot(args.state, args.lower, args.upper)
    K = p.binning.bin_count
    if not 0 <= args.row < K:
        raise DomainError(f"row {args.row} outside [0, {K})")
    counts = p.matrix.row(args.row)
    probs = p.row_distribution(args.row)
    edges = p.binning.edges
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin", "low", "high", "count", "probability"])
    for j in range(K):
        w.writerow([j, repr(float(edges[j])), repr(float(edges[j + 1])), int(counts[j]),
                    "" if probs is None else repr(float(probs[j]))])
    _emit(args, buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "coverage": cmd_coverage,
    "dump-row": cmd_dump_row,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _merge(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, TraceFormatError) as exc:
        print(f"ecmtput: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ecmtput {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, TraceFormatError) as exc:
        print(f"ecmtput {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValidationError, DomainError, InsufficientDataError) as exc:
        print(f"ecmtput {args.command}: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
