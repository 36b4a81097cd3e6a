import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from voxcluster import AxisSpec, VoxelGrid

PRESET_DIR = Path(__file__).parent.parent / "presets"


def make_grid(data: np.ndarray, q_ranges=None) -> VoxelGrid:
    """Wrap a float array in a VoxelGrid with simple axes."""
    data = np.asarray(data, dtype=np.float32)
    if q_ranges is None:
        q_ranges = [(-1.0, 1.0)] * 3
    axes = tuple(
        AxisSpec(lo, hi, n) for (lo, hi), n in zip(q_ranges, data.shape)
    )
    return VoxelGrid(axes=axes, data=data)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)
