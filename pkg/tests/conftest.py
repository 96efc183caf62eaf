"""
Shared fixtures for the GC-Register test suite.

src/ is the import root; pytest.ini sets pythonpath as well, this keeps
`pytest tests/some_file.py` working from any directory.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from cloud import PointCloud, RigidTransform  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_transform(rng, max_translation: float = 1.0) -> RigidTransform:
    rotation = Rotation.random(random_state=int(rng.integers(0, 2**31 - 1))).as_matrix()
    return RigidTransform(rotation, rng.uniform(-max_translation, max_translation, size=3))


@pytest.fixture
def make_transform(rng):
    return lambda max_translation=1.0: random_transform(rng, max_translation)


def surface_points(rng, count: int = 400, depth: float = 1.5) -> np.ndarray:
    """Bumpy heightfield below the origin, so normals toward the origin point up."""
    xy = rng.uniform(-1.0, 1.0, size=(count, 2))
    z = -depth + 0.2 * np.sin(3.0 * xy[:, 0]) * np.cos(2.0 * xy[:, 1])
    return np.column_stack([xy, z])


@pytest.fixture
def surface_cloud(rng) -> PointCloud:
    return PointCloud(surface_points(rng))


@pytest.fixture
def cube_corners() -> PointCloud:
    return PointCloud(np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)]))
