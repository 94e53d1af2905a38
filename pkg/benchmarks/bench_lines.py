"""Benchmark the jitted line-scan kernel against the pure-numpy fallback.

Usage: python benchmarks/bench_lines.py [--rounds N]
Set PAGEGEN_DISABLE_NUMBA=1 to check which path the package itself selects.
"""

import argparse
import time

import numpy as np

from pagegen import kernels
from pagegen.core import SeparationConfig
from pagegen.fixtures import synthetic_page


def time_scan(scan, args, rounds):
    best = float("inf")
    for _ in range(rounds):
        start = time.perf_counter()
        scan(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--rounds", type=int, default=20)
    opts = parser.parse_args()

    cfg = SeparationConfig()
    gray = synthetic_page().gray
    h, w = gray.shape
    stats = kernels._row_stats(gray, cfg.diff_thr)
    args = (*stats, h, w, cfg.window_size, float(cfg.var_thr),
            float(cfg.portion_thr))

    print(f"image {w}x{h}, window_size={cfg.window_size}, "
          f"rounds={opts.rounds} (best-of)")
    t_np = time_scan(kernels._scan_np, args, opts.rounds)
    print(f"numpy fallback : {t_np * 1e3:8.3f} ms")
    if kernels.USE_NUMBA:
        kernels._scan_jit(*args)  # compile outside the timing loop
        t_jit = time_scan(kernels._scan_jit, args, opts.rounds)
        print(f"numba kernel   : {t_jit * 1e3:8.3f} ms  "
              f"({t_np / t_jit:.1f}x vs numpy)")
        assert np.array_equal(kernels._scan_jit(*args), kernels._scan_np(*args))
        print("outputs identical")
    else:
        print("numba path disabled (PAGEGEN_DISABLE_NUMBA)")


if __name__ == "__main__":
    main()
