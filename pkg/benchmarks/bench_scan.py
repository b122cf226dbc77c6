"""Compiled vs numpy selective-scan kernels.

    python benchmarks/bench_scan.py [--repeat 5] [--quick]

Times the sequential forward and the backward kernel at a few (B, S, D, N)
shapes, checks that both kernels agree, and prints one row per shape.
"""
import argparse
import sys
import timeit

import numpy as np

from lumamba.bimamba import _scan_py
from lumamba.bimamba.scan import _scan_ext

SHAPES = [
    # (B, S, D, N)
    (1, 64, 16, 8),
    (8, 20, 512, 16),      # default backbone: S = 20 patches, D_inner = 2 * Q * E
    (8, 128, 512, 16),
    (4, 1024, 64, 16),
]


def inputs(b, s, d, n, seed=0):
    rng = np.random.default_rng(seed)
    f = np.float32
    u = rng.normal(size=(b, s, d)).astype(f)
    delta = np.log1p(np.exp(rng.normal(-2, 0.5, size=(b, s, d)))).astype(f)
    A = -np.exp(rng.normal(0, 0.5, size=(d, n))).astype(f)
    Bm = rng.normal(size=(b, s, n)).astype(f)
    Cm = rng.normal(size=(b, s, n)).astype(f)
    Dskip = rng.normal(size=d).astype(f)
    return u, delta, A, Bm, Cm, Dskip


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="first two shapes only")
    args = ap.parse_args(argv)
    if _scan_ext is None:
        print("compiled kernel not built (or LUMAMBA_PURE_PYTHON set); nothing to compare")
        return 1
    shapes = SHAPES[:2] if args.quick else SHAPES
    print(f"{'B':>3} {'S':>5} {'D':>4} {'N':>3} | {'fwd numpy':>10} {'fwd cython':>10} {'x':>6} "
          f"| {'bwd numpy':>10} {'bwd cython':>10} {'x':>6} | max diff")
    for b, s, d, n in shapes:
        x = inputs(b, s, d, n)
        y_py, h_py = _scan_py.forward(*x)
        y_cy, h_cy = _scan_ext.forward(*x)
        g = np.ones_like(y_py)
        diff = float(np.abs(y_py - y_cy).max())
        f_py = best(lambda: _scan_py.forward(*x), args.repeat)
        f_cy = best(lambda: _scan_ext.forward(*x), args.repeat)
        b_py = best(lambda: _scan_py.backward(g, *x, h_py), args.repeat)
        b_cy = best(lambda: _scan_ext.backward(g, *x, h_cy), args.repeat)
        print(f"{b:>3} {s:>5} {d:>4} {n:>3} | {f_py * 1e3:>8.2f}ms {f_cy * 1e3:>8.2f}ms "
              f"{f_py / f_cy:>5.1f}x | {b_py * 1e3:>8.2f}ms {b_cy * 1e3:>8.2f}ms "
              f"{b_py / b_cy:>5.1f}x | {diff:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
