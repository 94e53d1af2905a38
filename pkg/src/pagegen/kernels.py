"""Separation-line scan kernels.

The row scan is the hot loop of segmentation (every recursion level rescans
pixel rows), so it ships in two interchangeable implementations:

* a numba @njit kernel (default), and
* a vectorized pure-numpy fallback, selected by PAGEGEN_DISABLE_NUMBA=1.

Both operate on precomputed per-row cumulative sums so they are arithmetically
identical. ``benchmarks/bench_lines.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("PAGEGEN_DISABLE_NUMBA", "") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def _row_stats(gray: np.ndarray, diff_thr: float):
    """Per-row cumulative sums / sums of squares and adjacent-row border
    fractions for a (h, w) uint8 block."""
    f = gray.astype(np.float64)
    row_sum = f.sum(axis=1)
    row_sumsq = (f * f).sum(axis=1)
    csum = np.concatenate(([0.0], np.cumsum(row_sum)))
    csumsq = np.concatenate(([0.0], np.cumsum(row_sumsq)))
    # pair_frac[j]: fraction of columns where |row[j+1] - row[j]| > diff_thr
    diffs = np.abs(np.diff(f, axis=0))
    pair_frac = (diffs > diff_thr).mean(axis=1) if gray.shape[0] > 1 else np.zeros(0)
    return csum, csumsq, pair_frac


def _scan_py(csum, csumsq, pair_frac, h, w, ws, var_thr, portion_thr):
    npix = float(ws * w)
    out = np.zeros(h, dtype=np.bool_)
    for i in range(ws + 1, h):
        s1 = csum[i] - csum[i - ws]
        s2 = csumsq[i] - csumsq[i - ws]
        mean = s1 / npix
        var = s2 / npix - mean * mean
        if var >= var_thr:
            continue
        border_top = pair_frac[i - ws - 1] > portion_thr
        border_bottom = pair_frac[i - 1] > portion_thr
        if border_top or border_bottom:
            out[i if border_bottom else i - ws] = True
    return out


if USE_NUMBA:
    _scan_jit = njit(cache=True)(_scan_py)


def _scan_np(csum, csumsq, pair_frac, h, w, ws, var_thr, portion_thr):
    idx = np.arange(ws + 1, h)
    if idx.size == 0:
        return np.zeros(h, dtype=np.bool_)
    npix = float(ws * w)
    s1 = csum[idx] - csum[idx - ws]
    s2 = csumsq[idx] - csumsq[idx - ws]
    mean = s1 / npix
    var = s2 / npix - mean * mean
    blank = var < var_thr
    border_top = pair_frac[idx - ws - 1] > portion_thr
    border_bottom = pair_frac[idx - 1] > portion_thr
    hit = blank & (border_top | border_bottom)
    pos = np.where(border_bottom, idx, idx - ws)
    out = np.zeros(h, dtype=np.bool_)
    out[pos[hit]] = True
    return out


def scan_rows(gray: np.ndarray, window_size: int, var_thr: float,
              diff_thr: float, portion_thr: float) -> np.ndarray:
    """Run the sliding-window line scan over the rows of a grayscale block.

    Returns sorted, deduplicated cut positions (row indices within the block).
    A window of rows is a hit when its pixel variance is below ``var_thr`` and
    the per-column luma jump against the row directly above (or below) exceeds
    ``diff_thr`` on more than ``portion_thr`` of the columns; the cut lands on
    the border side that fired (bottom wins when both do).
    """
    h, w = gray.shape
    if h <= window_size + 1 or w == 0:
        return np.zeros(0, dtype=np.int64)
    csum, csumsq, pair_frac = _row_stats(gray, diff_thr)
    scan = _scan_jit if USE_NUMBA else _scan_np
    mask = scan(csum, csumsq, pair_frac, h, w, window_size,
                float(var_thr), float(portion_thr))
    return np.flatnonzero(mask).astype(np.int64)
