#!/usr/bin/env python3
"""Throughput comparison of the numba kernels against the numpy fallback.

Runs each sequence kernel on representative problem sizes in both backends
and prints a table with per-call times and the speedup. The numba timings
exclude JIT compilation (one warmup call per kernel).

Usage: python benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from vrftune.kernels import reference  # noqa: E402

try:
    from vrftune.kernels import accelerated
except ImportError:
    accelerated = None


def _esn_case(n=300, steps=8000, seed=0):
    rng = np.random.default_rng(seed)
    w_x = np.ascontiguousarray(rng.uniform(-0.1, 0.1, (n, n)))
    return {
        "esn_teacher_features": (
            rng.uniform(-1, 1, n), w_x, rng.uniform(-0.1, 0.1, n),
            rng.uniform(-2, 2, steps), rng.uniform(-1, 1, steps),
            np.zeros(n), 0.0),
        "esn_run": (
            rng.uniform(-1, 1, n), w_x, rng.uniform(-0.1, 0.1, n),
            rng.uniform(-0.01, 0.01, n), 0.0, rng.uniform(-2, 2, steps),
            np.zeros(n), 0.0),
    }


def _lstm_case(n=25, steps=6000, seed=1):
    rng = np.random.default_rng(seed)
    v = lambda: rng.uniform(-0.3, 0.3, n)
    m = lambda: rng.uniform(-0.3, 0.3, (n, n))
    e = rng.uniform(-2, 2, steps)
    return {
        "lstm_run": (v(), m(), v(), v(), m(), v(), v(), m(), v(), v(), m(),
                     v(), v(), 0.0, e, np.zeros(n), np.zeros(n)),
        "lstm_simplified_run": (v(), m(), v(), v(), m(), v(), e, np.zeros(n)),
        "lstm_simplified_loss_grads": (v(), m(), v(), v(), m(), v(), e,
                                       rng.uniform(-0.8, 0.8, steps), 50),
    }


def _misc_case(steps=20000, seed=2):
    rng = np.random.default_rng(seed)
    return {
        "plant_run": (rng.uniform(-12, 12, steps), 0.005, 0.15, 0.0, 300.0,
                      210.0, 300.0, 900.0, 0.15, 0.4, 1e-3, -12.0, 12.0),
        "integrator_replay": (rng.uniform(-0.3, 0.3, steps), 60.0, -3.6, 3.6,
                              0.0),
    }


def _time_call(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3,
                        help="timed repetitions per kernel (best is kept)")
    args = parser.parse_args()

    if accelerated is None:
        print("numba backend unavailable; nothing to compare", file=sys.stderr)
        return 1

    cases = {}
    cases.update(_esn_case())
    cases.update(_lstm_case())
    cases.update(_misc_case())

    print(f"{'kernel':34s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>9s}")
    for name, call_args in cases.items():
        slow_fn = getattr(reference, name)
        fast_fn = getattr(accelerated, name)
        fast_fn(*call_args)  # JIT warmup
        t_slow = _time_call(slow_fn, call_args, args.repeats)
        t_fast = _time_call(fast_fn, call_args, args.repeats)
        print(f"{name:34s} {1e3 * t_slow:12.2f} {1e3 * t_fast:12.2f} "
              f"{t_slow / t_fast:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
