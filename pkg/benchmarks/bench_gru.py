"""Compare the compiled GRU kernel against the pure-numpy fallback.

Usage: python3 benchmarks/bench_gru.py [--steps 200] [--hidden 150] [--repeat 5]
"""

import argparse
import time

import numpy as np

from mmkp import kernels
from mmkp.kernels import gru_py

try:
    from mmkp.kernels import _gru_cy
except ImportError:
    _gru_cy = None


def bench(module, x, h0, wx, wh, b, g, repeat):
    best_fwd = best_bwd = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        hs, cache = module.gru_forward(x, h0, wx, wh, b)
        t1 = time.perf_counter()
        module.gru_backward(g, cache)
        t2 = time.perf_counter()
        best_fwd = min(best_fwd, t1 - t0)
        best_bwd = min(best_bwd, t2 - t1)
    return best_fwd, best_bwd, hs


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--input-dim", type=int, default=200)
    parser.add_argument("--hidden", type=int, default=150)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    t, din, h = args.steps, args.input_dim, args.hidden
    x = rng.uniform(-1, 1, size=(t, din))
    h0 = rng.uniform(-1, 1, size=h)
    wx = rng.uniform(-0.1, 0.1, size=(din, 3 * h))
    wh = rng.uniform(-0.1, 0.1, size=(h, 3 * h))
    b = rng.uniform(-0.1, 0.1, size=3 * h)
    g = rng.uniform(-1, 1, size=(t, h))

    print(f"sequence {t} x {din} -> hidden {h} (selected backend: {kernels.BACKEND})")
    py_fwd, py_bwd, hs_py = bench(gru_py, x, h0, wx, wh, b, g, args.repeat)
    print(f"python  forward {py_fwd * 1e3:8.2f} ms   backward {py_bwd * 1e3:8.2f} ms")
    if _gru_cy is None:
        print("compiled kernel not built; run pip install -e . to build it")
        return
    cy_fwd, cy_bwd, hs_cy = bench(_gru_cy, x, h0, wx, wh, b, g, args.repeat)
    print(f"cython  forward {cy_fwd * 1e3:8.2f} ms   backward {cy_bwd * 1e3:8.2f} ms")
    print(f"speedup forward {py_fwd / cy_fwd:7.2f}x   backward {py_bwd / cy_bwd:7.2f}x")
    print(f"max |diff| between backends: {np.max(np.abs(hs_py - hs_cy)):.2e}")


if __name__ == "__main__":
    main()
