#!/usr/bin/env python3
"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n 2000 5000] [--repeat 3]

Prints one row per (kernel, size) with the best-of-``repeat`` wall time of
each backend and the speed-up.  Both backends are checked to agree before
timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from spendlens import _kernels


def _series(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    x = np.log10(np.arange(1, n + 1, dtype=np.float64))
    y = 3 - 0.3 * x - 1.2 * np.maximum(x - 2, 0) + rng.normal(0, 0.05, n)
    return x - x.mean(), y - y.mean()


def _cases(sizes):
    for n in sizes:
        x, y = _series(n)
        yield "best_pair_continuous", n, (x, y, 5)
        yield "best_pair_discontinuous", n, (x, y, 5)
    for steps in (10 * n for n in sizes):
        rng = np.random.default_rng(1)
        yield "yule_counts", steps, (0.1, rng.random(steps), rng.random(steps))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[1000, 5000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    cy, py = _kernels.compiled_backend, _kernels.python_backend
    if cy is None:
        print("compiled kernels are not available; rebuild with Cython installed")
        return 1
    print(f"{'kernel':26s} {'size':>8s} {'cython s':>10s} {'python s':>10s} {'speed-up':>9s}")
    for name, size, call_args in _cases(args.n):
        fc, fp = getattr(cy, name), getattr(py, name)
        a, b = fc(*call_args), fp(*call_args)
        if name == "yule_counts":
            assert np.array_equal(a, b)
        else:
            assert a[:2] == b[:2] or abs(a[2] - b[2]) <= 1e-9 * max(1.0, abs(b[2]))
        tc = min(timeit.repeat(lambda: fc(*call_args), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fp(*call_args), number=1, repeat=args.repeat))
        print(f"{name:26s} {size:8d} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
