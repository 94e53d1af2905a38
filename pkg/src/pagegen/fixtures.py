"""Synthetic page rasters for tests, benchmarks and demos."""

from __future__ import annotations

import numpy as np

from .core import Raster


def band_rows(spec: list, width: int = 12) -> np.ndarray:
    """Grayscale block from (luma, row_count) bands, e.g. [(10, 3), (200, 3)]."""
    rows = [np.full((count, width), luma, dtype=np.uint8)
            for luma, count in spec]
    return np.vstack(rows)


def gray_raster(gray: np.ndarray) -> Raster:
    return Raster.from_rgb(np.repeat(gray[:, :, None], 3, axis=2))


def synthetic_page(width: int = 1200, height: int = 2000) -> Raster:
    """A page-like screenshot: three content bands separated by wide blank
    gutters, where the middle band holds side-by-side columns (nested vertical
    structure) themselves separated by a blank gutter."""
    rgb = np.full((height, width, 3), 255, dtype=np.uint8)

    def fill(y0, y1, x0, x1, color):
        rgb[y0:y1, x0:x1] = color

    # header band
    fill(0, 400, 20, width - 20, (30, 60, 120))
    # middle band: two columns with a blank gutter between them
    fill(520, 1300, 20, 570, (220, 120, 40))
    fill(520, 1300, 630, width - 20, (40, 160, 90))
    # footer band
    fill(1420, height - 60, 20, width - 20, (90, 90, 90))
    return Raster.from_rgb(rgb)
