import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make tests/oracles.py importable


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_grid_cube(center, side, n_per_axis=10):
    """Grid-distributed cube of points; extremes carry enough mass that
    percentile clipping at small trim fractions keeps the exact hull."""
    axes = [np.linspace(c - side / 2.0, c + side / 2.0, n_per_axis) for c in center]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
