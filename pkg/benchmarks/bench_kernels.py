"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 100000] [--repeat 5]
"""
import argparse
import os
import time

import numpy as np

from ecmtput._accel import ENV_FLAG, HAVE_NUMBA
from ecmtput.predictor import AmPredictor, BinningScheme, EcmPredictor
from ecmtput.simulator import AmSpec, EcmSpec, SimConfig, run_simulation
from ecmtput.trace import SyntheticTraceSpec, synth_markov_trace, transfer_completion


def cases(n):
    rng = np.random.default_rng(0)
    values = rng.uniform(100, 1000, n)
    binning = BinningScheme(100, 1000, 32)
    trained = EcmPredictor(binning)
    trained.walk(values[: n // 2])
    trace = synth_markov_trace(SyntheticTraceSpec(
        [1000, 300, 50], [[0.8, 0.15, 0.05], [0.2, 0.6, 0.2], [0.1, 0.3, 0.6]], 0.1, n / 10, 0.2, 1))
    starts = rng.uniform(0, trace.end_time * 0.9, 2000)

    return {
        "ecm_walk (cap inf)": lambda: EcmPredictor(binning).walk(values),
        "ecm_walk (cap 500)": lambda: EcmPredictor(binning, 500).walk(values),
        "am_walk (M=16)": lambda: AmPredictor(16).walk(values),
        "interval_walk (a=0.05)": lambda: trained.clone().interval_walk(values[n // 2:], 0.05),
        "transfer x2000": lambda: [transfer_completion(trace, s, 500.0) for s in starts],
        "simulate am16 fps10": lambda: run_simulation(SimConfig(trace, 10, 0.0, AmSpec(16))),
        "simulate ecm32 fps10": lambda: run_simulation(SimConfig(trace, 10, 0.0, EcmSpec(32))),
    }


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000, help="series length")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    modes = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    results = {}
    for mode in modes:
        if mode == "numpy":
            os.environ[ENV_FLAG] = "1"
        else:
            os.environ.pop(ENV_FLAG, None)
        for name, fn in cases(args.n).items():
            results.setdefault(name, {})[mode] = best_of(fn, args.repeat)
    os.environ.pop(ENV_FLAG, None)

    print(f"n={args.n}, best of {args.repeat}" + ("" if HAVE_NUMBA else " (numba not installed)"))
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}")
    for name, r in results.items():
        nb = r.get("numba")
        line = f"{name:<24}{r['numpy'] * 1e3:>12.2f}"
        if nb is not None:
            line += f"{nb * 1e3:>12.2f}{r['numpy'] / nb:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
