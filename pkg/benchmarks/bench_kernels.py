"""Benchmark the numba-jitted kernels against the pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py  [--repeats N]

Covers the three hot paths of the training loop: convolution forward,
convolution backward (input + weights), and the Hungarian assignment.
"""

import argparse
import time

import numpy as np

from camocount import kernels


def bench(fn, repeats, *args):
    fn(*args)  # warm-up (also triggers JIT compilation)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def fmt(seconds):
    return f"{seconds * 1e3:9.3f} ms"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    if not kernels.NUMBA_ENABLED:
        print("numba backend inactive (not installed or "
              f"{kernels.DISABLE_ENV} set); showing numpy path only\n")

    rows = []

    # conv2d: stem (skinny input), encoder, and stack-sized workloads
    for h, w, cin, cout, stride in ((256, 256, 3, 16, 2), (64, 64, 16, 32, 2),
                                    (32, 32, 32, 64, 2), (8, 8, 64, 64, 1)):
        x = rng.normal(size=(h, w, cin))
        wgt = rng.normal(size=(3, 3, cin, cout))
        oh = -(-h // stride)
        dy = rng.normal(size=(oh, oh, cout))
        label = f"conv2d fwd {h}x{w}x{cin}->{cout} s{stride}"
        t_np = bench(kernels.conv2d_forward_np, args.repeats, x, wgt, stride)
        t_nb = (bench(kernels._conv2d_forward_nb, args.repeats,
                      x, wgt, stride)
                if kernels.NUMBA_ENABLED else None)
        rows.append((label, t_np, t_nb))
        label = f"conv2d bwd {h}x{w}x{cin}->{cout} s{stride}"
        t_np = (bench(kernels.conv2d_backward_input_np, args.repeats,
                      dy, wgt, stride, h, w)
                + bench(kernels.conv2d_backward_weights_np, args.repeats,
                        x, dy, stride, 3, 3))
        t_nb = None
        if kernels.NUMBA_ENABLED:
            t_nb = (bench(kernels._conv2d_backward_input_nb, args.repeats,
                          dy, wgt, stride, h, w)
                    + bench(kernels._conv2d_backward_weights_nb,
                            args.repeats, x, dy, stride, 3, 3))
        rows.append((label, t_np, t_nb))

    # hungarian: training-sized and full-scale assignment problems
    for k, n in ((10, 128), (60, 128), (300, 700)):
        cost = rng.random((k, n))
        label = f"hungarian {k}x{n}"
        t_np = bench(kernels.hungarian_np, args.repeats, cost)
        t_nb = (bench(kernels.hungarian, args.repeats, cost)
                if kernels.NUMBA_ENABLED else None)
        rows.append((label, t_np, t_nb))

    width = max(len(r[0]) for r in rows)
    header = f"{'kernel':<{width}}  {'numpy':>12}  {'numba':>12}  speedup"
    print(header)
    print("-" * len(header))
    for label, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{label:<{width}}  {fmt(t_np):>12}  {'-':>12}")
        else:
            print(f"{label:<{width}}  {fmt(t_np):>12}  {fmt(t_nb):>12}  "
                  f"{t_np / t_nb:6.2f}x")


if __name__ == "__main__":
    main()
