"""
Multi-Plane Image Representation
================================

PLANE ORDERING:
- z = 0 is the nearest plane; plane_depths increase with z
- Inverse depths 1/d(z) form an arithmetic progression (decreasing in z)

CHANNELS (per plane):
- color (Z, H, W, 3) in [0, 1]
- depth (Z, H, W) true per-voxel depth in metres, positive wherever alpha > 0
- alpha (Z, H, W) in [0, 1]; one-hot per pixel for a freshly built MPI

DEBUG DUMP FORMAT (.mpi):
    Header: Z, H, W (int32 LE)
    Body:   color, depth, alpha, plane_depths (float32 LE, row-major)
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.common.errors import DimensionError, DomainError, InputError
from src.common.rawio import read_floats, read_header, write_floats, write_header

DEFAULT_RANGE_MARGIN = 1e-3
HOLE_THRESHOLD = 0.5


@dataclass
class MultiPlaneImage:
    """Z RGBA planes with a true-depth channel and their plane-depth table."""
    color: np.ndarray
    depth: np.ndarray
    alpha: np.ndarray
    plane_depths: np.ndarray

    def __post_init__(self):
        self.color = np.asarray(self.color, dtype=np.float64)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.plane_depths = np.asarray(self.plane_depths, dtype=np.float64)
        if self.alpha.ndim != 3:
            raise DimensionError(f"alpha must be (Z, H, W), got {self.alpha.shape}")
        if self.color.shape != self.alpha.shape + (3,):
            raise DimensionError(f"color {self.color.shape} does not match alpha {self.alpha.shape}")
        if self.depth.shape != self.alpha.shape:
            raise DimensionError(f"depth {self.depth.shape} does not match alpha {self.alpha.shape}")
        if self.plane_depths.shape != (self.alpha.shape[0],):
            raise DimensionError(
                f"plane_depths has {self.plane_depths.shape} entries for {self.alpha.shape[0]} planes")
        if np.any(np.diff(self.plane_depths) <= 0):
            raise DomainError("plane_depths must be strictly increasing")

    @property
    def num_planes(self) -> int:
        return self.alpha.shape[0]

    @property
    def shape(self) -> Tuple[int, int, int]:
        """(Z, H, W)"""
        return self.alpha.shape

    @property
    def occupied(self) -> np.ndarray:
        """Voxels with non-zero alpha."""
        return self.alpha > 0

    def copy(self) -> 'MultiPlaneImage':
        return MultiPlaneImage(self.color.copy(), self.depth.copy(),
                               self.alpha.copy(), self.plane_depths.copy())

    def rgba(self) -> np.ndarray:
        """(Z, H, W, 4) colour and alpha stacked."""
        return np.concatenate([self.color, self.alpha[..., None]], axis=-1)

    def shares_planes(self, other: 'MultiPlaneImage') -> bool:
        return (self.shape == other.shape
                and np.array_equal(self.plane_depths, other.plane_depths))


def plane_depth_table(min_depth: float, max_depth: float, num_planes: int) -> np.ndarray:
    """
    Plane depths sampled uniformly in inverse depth, nearest plane first.

    Raises:
        DomainError: non-positive depths, min >= max or fewer than 2 planes
    """
    if num_planes < 2:
        raise DomainError(f"Need at least 2 planes, got {num_planes}")
    if not (0 < min_depth < max_depth) or not np.isfinite(max_depth):
        raise DomainError(f"Depth range must satisfy 0 < min < max, got ({min_depth}, {max_depth})")
    inverse = np.linspace(1.0 / min_depth, 1.0 / max_depth, num_planes)
    return 1.0 / inverse


def assign_planes(depth: np.ndarray, plane_depths: np.ndarray) -> np.ndarray:
    """
    Index of the plane nearest each depth in inverse depth.

    Exact ties go to the nearer (lower-index) plane; depths outside the table
    land on the boundary plane.
    """
    inverse = 1.0 / np.asarray(depth, dtype=np.float64)
    plane_inverse = 1.0 / np.asarray(plane_depths, dtype=np.float64)
    distance = np.abs(inverse[..., None] - plane_inverse)
    return np.argmin(distance, axis=-1)


def default_depth_range(depth: np.ndarray) -> Tuple[float, float]:
    """[min, max] of a depth map expanded by a relative margin."""
    return (float(depth.min()) * (1.0 - DEFAULT_RANGE_MARGIN),
            float(depth.max()) * (1.0 + DEFAULT_RANGE_MARGIN))


def build_mpi(rgb: np.ndarray, depth: np.ndarray, num_planes: int,
              depth_range: Optional[Tuple[float, float]] = None,
              plane_depths: Optional[np.ndarray] = None) -> MultiPlaneImage:
    """
    Build a one-hot MPI from an RGB-D frame.

    Args:
        rgb: (H, W, 3) colour in [0, 1]
        depth: (H, W) metres, strictly positive
        num_planes: Z >= 2
        depth_range: optional (min, max) covering the depth map
        plane_depths: optional explicit table (shares another MPI's planes);
            takes precedence over depth_range

    Returns:
        MultiPlaneImage with alpha = 1 on each pixel's nearest plane.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2 or rgb.shape != depth.shape + (3,):
        raise DimensionError(f"rgb {rgb.shape} and depth {depth.shape} must be (H, W, 3) and (H, W)")
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise DomainError("Depth values must be finite and strictly positive")

    if plane_depths is not None:
        plane_depths = np.asarray(plane_depths, dtype=np.float64)
        if plane_depths.shape != (num_planes,):
            raise DimensionError(f"plane_depths has {plane_depths.shape} entries, expected {num_planes}")
    else:
        if depth_range is None:
            depth_range = default_depth_range(depth)
        elif depth_range[0] > depth.min() or depth_range[1] < depth.max():
            raise DomainError(
                f"depth_range {tuple(depth_range)} does not cover [{depth.min()}, {depth.max()}]")
        plane_depths = plane_depth_table(depth_range[0], depth_range[1], num_planes)

    height, width = depth.shape
    index = assign_planes(depth, plane_depths)
    one_hot = index[None] == np.arange(num_planes)[:, None, None]

    alpha = one_hot.astype(np.float64)
    color = np.where(one_hot[..., None], rgb[None], 0.0)
    depth_channel = np.where(one_hot, depth[None], 0.0)
    return MultiPlaneImage(color, depth_channel, alpha, plane_depths)


def empty_like(mpi: MultiPlaneImage) -> MultiPlaneImage:
    """All-zero MPI on the same plane table."""
    return MultiPlaneImage(np.zeros_like(mpi.color), np.zeros_like(mpi.depth),
                           np.zeros_like(mpi.alpha), mpi.plane_depths.copy())


def visibility_mask(mpi: MultiPlaneImage) -> np.ndarray:
    """
    Per-voxel product of (1 - alpha) over all nearer planes.

    Plane 0 has visibility 1 everywhere.
    """
    transmit = 1.0 - np.clip(mpi.alpha, 0.0, 1.0)
    visibility = np.ones_like(transmit)
    visibility[1:] = np.cumprod(transmit[:-1], axis=0)
    return visibility


def _composite_weights(mpi: MultiPlaneImage) -> np.ndarray:
    return np.clip(mpi.alpha, 0.0, 1.0) * visibility_mask(mpi)


def alpha_composite(mpi: MultiPlaneImage) -> Tuple[np.ndarray, np.ndarray]:
    """
    Over-composite an MPI, nearest plane in front.

    Returns:
        (rgb (H, W, 3), hole_mask (H, W) bool) where the hole mask marks
        pixels whose accumulated alpha is below HOLE_THRESHOLD.
    """
    weights = _composite_weights(mpi)
    rgb = np.sum(weights[..., None] * mpi.color, axis=0)
    accumulated = np.sum(weights, axis=0)
    return np.clip(rgb, 0.0, 1.0), accumulated < HOLE_THRESHOLD


def composite_depth(mpi: MultiPlaneImage) -> np.ndarray:
    """Over-composited depth normalised by accumulated alpha; 0 at empty pixels."""
    weights = _composite_weights(mpi)
    accumulated = np.sum(weights, axis=0)
    depth = np.sum(weights * mpi.depth, axis=0)
    safe = np.where(accumulated > 0, accumulated, 1.0)
    return np.where(accumulated > 0, depth / safe, 0.0)


def front_plane_index(mpi: MultiPlaneImage) -> np.ndarray:
    """(H, W) index of the nearest occupied plane, -1 at empty pixels."""
    occupied = mpi.occupied
    index = np.argmax(occupied, axis=0)
    return np.where(occupied.any(axis=0), index, -1)


def save_mpi_dump(path: Union[str, Path], mpi: MultiPlaneImage):
    """Write the raw debug dump of an MPI."""
    with open(path, 'wb') as f:
        write_header(f, mpi.shape)
        write_floats(f, mpi.color)
        write_floats(f, mpi.depth)
        write_floats(f, mpi.alpha)
        write_floats(f, mpi.plane_depths)


def load_mpi_dump(path: Union[str, Path]) -> MultiPlaneImage:
    """Read a dump written by save_mpi_dump (values come back at float32 precision)."""
    with open(path, 'rb') as f:
        num_planes, height, width = read_header(f, 3)
        color = read_floats(f, (num_planes, height, width, 3))
        depth = read_floats(f, (num_planes, height, width))
        alpha = read_floats(f, (num_planes, height, width))
        plane_depths = read_floats(f, (num_planes,))
        if f.read(1):
            raise InputError(f"Trailing bytes in MPI dump {path}")
    return MultiPlaneImage(color, depth, alpha, plane_depths)
