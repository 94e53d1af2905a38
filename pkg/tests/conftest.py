import numpy as np
import pytest

from pagegen.core import ModelConfig, SeparationConfig
from pagegen.fixtures import band_rows, gray_raster
from pagegen.provider import MockProvider

# Algorithm-trace config shared by the band fixtures
BAND_CFG = SeparationConfig(window_size=3, var_thr=10, diff_thr=50,
                            portion_thr=0.5, max_depth=2)


@pytest.fixture
def band_cfg():
    return BAND_CFG


@pytest.fixture
def three_strip_raster():
    # 10x10: dark / light band / dark, cuts at rows 3 and 7
    return gray_raster(band_rows([(10, 3), (200, 4), (10, 3)], width=10))


def echo_provider(latency_ms=0, concurrency_limit=64, **script_extra):
    script = {"kind": "echo", "latency_ms": latency_ms, **script_extra}
    return MockProvider(script,
                        config=ModelConfig(concurrency_limit=concurrency_limit))


@pytest.fixture
def echo_mock():
    return echo_provider()


def random_raster(rng, max_side=64):
    """Random small raster with some blocky structure so splits happen."""
    h = int(rng.integers(4, max_side + 1))
    w = int(rng.integers(4, max_side + 1))
    gray = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
    # paint a few uniform bands to give the detector something to find
    for _ in range(int(rng.integers(0, 4))):
        if rng.random() < 0.5:
            y0 = int(rng.integers(0, h))
            y1 = int(rng.integers(y0 + 1, h + 1))
            gray[y0:y1, :] = int(rng.integers(0, 256))
        else:
            x0 = int(rng.integers(0, w))
            x1 = int(rng.integers(x0 + 1, w + 1))
            gray[:, x0:x1] = int(rng.integers(0, 256))
    return gray_raster(gray)


def random_config(rng):
    return SeparationConfig(
        window_size=int(rng.integers(1, 8)),
        var_thr=float(rng.uniform(0, 400)),
        diff_thr=float(rng.uniform(0, 120)),
        portion_thr=float(rng.uniform(0.2, 1.0)),
        max_depth=int(rng.integers(0, 4)),
    )
