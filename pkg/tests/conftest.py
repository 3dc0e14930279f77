"""
Shared fixtures: cameras, textured RGB-D frames and small MPIs.

Geometry is chosen so camera shifts are whole pixels: f = 100 px, so a 0.2 m
camera translation moves a plane at 2 m by 10 px and one at 10 m by 2 px.
"""

import numpy as np
import pytest

from src.geometry.camera import CameraModel, make_intrinsics
from src.mpi.representation import build_mpi

WIDTH = 64
HEIGHT = 48
FOCAL = 100.0


def translated_pose(tx: float = 0.0, ty: float = 0.0, tz: float = 0.0) -> np.ndarray:
    """World-to-camera pose of a camera centred at (tx, ty, tz) with no rotation."""
    pose = np.eye(4)
    pose[:3, 3] = [-tx, -ty, -tz]
    return pose


@pytest.fixture
def intrinsics():
    return make_intrinsics(FOCAL, FOCAL, WIDTH / 2, HEIGHT / 2)


@pytest.fixture
def make_camera(intrinsics):
    def _make(tx: float = 0.0, ty: float = 0.0, tz: float = 0.0, size=(WIDTH, HEIGHT)):
        return CameraModel(intrinsics, translated_pose(tx, ty, tz), size)
    return _make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def texture(rng):
    """(H, W, 3) random colours in [0, 1]."""
    return rng.uniform(0.0, 1.0, (HEIGHT, WIDTH, 3))


@pytest.fixture
def two_depth_frame(texture):
    """Foreground square at 2 m over a background at 10 m."""
    depth = np.full((HEIGHT, WIDTH), 10.0)
    depth[16:32, 24:40] = 2.0
    return texture, depth


@pytest.fixture
def two_depth_mpi(two_depth_frame):
    rgb, depth = two_depth_frame
    return build_mpi(rgb, depth, 4, depth_range=(1.0, 10.0))
