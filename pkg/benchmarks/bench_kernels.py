#!/usr/bin/env python3
"""Benchmark the hot kernels: numba against the pure-numpy fallback.

Times the budgeted-extraction best response (multiplier bisection) and
the trajectory DP on solver-realistic sizes.  Run after installing the
package:

    python3 benchmarks/bench_kernels.py [--repeat 20]

Selecting a backend for the library itself is done via MFO_BACKEND;
this script always measures both implementations directly.
"""

import argparse
import time

import numpy as np

from mfo import _kernels


def timeit(fn, args, repeat):
    fn(*args)  # warm-up (and jit compile)
    best = np.inf
    for _ in range(repeat):
        tic = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - tic)
    return best


def bench_resource(repeat):
    rng = np.random.default_rng(0)
    steps, agents = 100, 100
    dt = 10.0 / steps
    top = rng.uniform(-0.5, 1.0, steps)
    ert = np.exp(dt * np.arange(steps))
    budgets = rng.uniform(0.0, 4.0, agents)
    args = (top, ert, 1.0, dt, budgets)
    rows = [("resource_br/numpy", timeit(_kernels.resource_br_numpy, args, repeat))]
    if _kernels.resource_br_numba is not None:
        rows.append(("resource_br/numba", timeit(_kernels.resource_br_numba, args, repeat)))
    return rows


def bench_congestion(repeat):
    rng = np.random.default_rng(1)
    n_pos, steps, qmax = 450, 20, 50
    cost = rng.random((n_pos, steps))
    below = np.arange(n_pos) < 350
    args = (cost, qmax, below, 0)
    rows = [("congestion_dp/numpy", timeit(_kernels.congestion_dp_numpy, args, repeat))]
    if _kernels.congestion_dp_numba is not None:
        rows.append(("congestion_dp/numba", timeit(_kernels.congestion_dp_numba, args, repeat)))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    rows = bench_resource(args.repeat) + bench_congestion(args.repeat)
    width = max(len(name) for name, _ in rows)
    print(f"{'kernel':<{width}}  best of {args.repeat} (ms)")
    baselines = {}
    for name, seconds in rows:
        kernel = name.split("/")[0]
        baselines.setdefault(kernel, seconds)
        speedup = baselines[kernel] / seconds
        print(f"{name:<{width}}  {seconds * 1e3:10.3f}   x{speedup:.1f} vs numpy")


if __name__ == "__main__":
    main()
