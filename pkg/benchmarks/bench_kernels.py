"""Compiled vs numpy convolution kernels, and one full training step per backend.

    python3 benchmarks/bench_kernels.py [--size 64] [--channels 16] [--repeats 50]

The training-step timing swaps the kernel module's implementation in place, so
both backends run the same Python code around the convolutions.
"""

import argparse
import time

import numpy as np

from ssrecon import kernels
from ssrecon.dataio import CohortConfig, generate_scan
from ssrecon.kernels import _fallback
from ssrecon.network import NetConfig, init_params
from ssrecon.training import SELFSUP, backprop, loss_spec_for


def timeit(fn, repeats):
    fn()
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best * 1e3


def conv_table(size, channels, repeats):
    rng = np.random.default_rng(0)
    impls = {"python": _fallback}
    if kernels.BACKEND == "compiled":
        impls["compiled"] = kernels._impl
    else:
        print("compiled extension not available; showing the numpy backend only")
    print(f"{'layer':>14} {'op':>10} " + " ".join(f"{name:>12}" for name in impls) + "   speedup")
    for cin, cout in [(2, channels), (channels, channels), (channels, 2)]:
        x = rng.standard_normal((cin, size, size))
        w = rng.standard_normal((cout, cin, 3, 3))
        gy = rng.standard_normal((cout, size, size))
        for op, fn in [
            ("forward", lambda m: m.conv2d(x, w)),
            ("input-grad", lambda m: kernels.conv2d_input_grad(gy, w, impl=m)),
            ("weight-grad", lambda m: m.conv2d_weight_grad(x, gy, 3)),
        ]:
            ms = {name: timeit(lambda m=m: fn(m), repeats) for name, m in impls.items()}
            speed = f"{ms['python'] / ms['compiled']:8.2f}x" if "compiled" in ms else ""
            cells = " ".join(f"{v:10.3f}ms" for v in ms.values())
            print(f"{cin:>6}->{cout:<6} {op:>11} {cells} {speed}")
    if "compiled" in impls:
        x = rng.standard_normal((channels, size, size))
        w = rng.standard_normal((channels, channels, 3, 3))
        diff = np.abs(impls["compiled"].conv2d(x, w) - _fallback.conv2d(x, w)).max()
        print(f"max |compiled - python| on a {channels}->{channels} forward: {diff:.2e}")


def step_table(size, channels, repeats):
    scan = generate_scan(0, CohortConfig(size=size))
    cfg = NetConfig(channels=channels)
    params = init_params(cfg, 0)
    params.theta[:] += 1e-3  # nonzero output layer so every branch of the backward pass runs
    spec = loss_spec_for(scan, SELFSUP)
    saved = kernels._impl
    impls = {"python": _fallback}
    if kernels.BACKEND == "compiled":
        impls["compiled"] = saved
    try:
        for name, impl in impls.items():
            kernels._impl = impl
            ms = timeit(lambda: backprop(params, spec), max(1, repeats // 10))
            print(f"training step ({name:>8}, T={cfg.unrolls}, C={channels}, B={cfg.res_blocks}): {ms:8.1f} ms")
    finally:
        kernels._impl = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--repeats", type=int, default=50)
    args = ap.parse_args()
    print(f"kernel backend at import: {kernels.BACKEND}")
    conv_table(args.size, args.channels, args.repeats)
    step_table(args.size, args.channels, args.repeats)


if __name__ == "__main__":
    main()
