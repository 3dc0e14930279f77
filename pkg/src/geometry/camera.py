"""
Pinhole Camera Model
====================

CONVENTIONS:
- Pose T maps world to camera (x_cam = R x_world + t), metres
- Depth is the positive z coordinate in the camera frame
- Pixel coordinates are (x, y) = (column, row); intrinsics K are in pixels

The pose-warping operator maps a pixel x with depth d and local flow u from
view `src` to view `dst`:

    P(x, u, d) = K_dst T_dst T_src^-1 (d + u_z) K_src^-1 (x + u_xy)

followed by the homogeneous-to-pixel division.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.common.errors import DegenerateProjectionError, DimensionError, DomainError

ORTHONORMAL_TOLERANCE = 1e-6


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics, world-to-camera pose and image size of one frame."""
    intrinsics: np.ndarray
    pose: np.ndarray
    image_size: Tuple[int, int]  # (width, height)

    def __post_init__(self):
        object.__setattr__(self, 'intrinsics', np.asarray(self.intrinsics, dtype=np.float64))
        object.__setattr__(self, 'pose', np.asarray(self.pose, dtype=np.float64))
        object.__setattr__(self, 'image_size', (int(self.image_size[0]), int(self.image_size[1])))
        self.validate()

    def validate(self):
        """Check the K and T invariants; raise DomainError on violation."""
        K, T = self.intrinsics, self.pose
        if K.shape != (3, 3):
            raise DimensionError(f"Intrinsics must be 3x3, got {K.shape}")
        if T.shape != (4, 4):
            raise DimensionError(f"Pose must be 4x4, got {T.shape}")
        if K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0:
            raise DomainError("Intrinsics must be upper-triangular")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise DomainError(f"Focal lengths must be positive, got ({K[0, 0]}, {K[1, 1]})")
        if K[2, 2] != 1:
            raise DomainError(f"K[2][2] must be 1, got {K[2, 2]}")
        if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
            raise DomainError(f"Pose last row must be (0,0,0,1), got {T[3]}")
        R = T[:3, :3]
        if not np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=ORTHONORMAL_TOLERANCE):
            raise DomainError("Pose rotation block is not orthonormal")
        if self.image_size[0] <= 0 or self.image_size[1] <= 0:
            raise DomainError(f"Image size must be positive, got {self.image_size}")

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    def same_view(self, other: 'CameraModel') -> bool:
        """True when both cameras share intrinsics and pose exactly."""
        return (np.array_equal(self.intrinsics, other.intrinsics)
                and np.array_equal(self.pose, other.pose))

    def with_pose(self, pose: np.ndarray) -> 'CameraModel':
        return CameraModel(self.intrinsics, pose, self.image_size)


def identity_camera(intrinsics: np.ndarray, image_size: Tuple[int, int]) -> CameraModel:
    """Camera at the world origin looking down +z."""
    return CameraModel(intrinsics, np.eye(4), image_size)


def make_intrinsics(fx: float, fy: float, cx: float, cy: float) -> np.ndarray:
    """Build a zero-skew 3x3 intrinsics matrix."""
    return np.array([[fx, 0.0, cx],
                     [0.0, fy, cy],
                     [0.0, 0.0, 1.0]])


def relative_transform(src: CameraModel, dst: CameraModel) -> np.ndarray:
    """T_dst T_src^-1 using the closed-form rigid inverse."""
    R, t = src.pose[:3, :3], src.pose[:3, 3]
    src_inv = np.eye(4)
    src_inv[:3, :3] = R.T
    src_inv[:3, 3] = -R.T @ t
    return dst.pose @ src_inv


class Reprojection(NamedTuple):
    """Target-view pixel coordinates and depth of one reprojected point."""
    coords: Tuple[float, float]
    depth: float

    @property
    def valid(self) -> bool:
        """False for points that land behind the target camera."""
        return self.depth > 0 and bool(np.all(np.isfinite(self.coords)))


def reproject_points(coords: np.ndarray, depth: np.ndarray, flow: Optional[np.ndarray],
                     src: CameraModel, dst: CameraModel
                     ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised pose-warping operator.

    Args:
        coords: (..., 2) source pixel coordinates (x, y)
        depth: (...) source depths in metres
        flow: optional (..., 3) local flow (dx, dy, dz); None means zero flow
        src: source camera
        dst: target camera

    Returns:
        (target coords (..., 2), target depth (...), valid mask (...)).
        Entries with non-positive effective or target depth are invalid and
        carry NaN coordinates; this form never raises for individual points.
    """
    coords = np.asarray(coords, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if coords.shape[-1] != 2 or coords.shape[:-1] != depth.shape:
        raise DimensionError(f"coords {coords.shape} and depth {depth.shape} do not agree")

    if flow is not None:
        flow = np.asarray(flow, dtype=np.float64)
        if flow.shape != depth.shape + (3,):
            raise DimensionError(f"flow {flow.shape} must be {depth.shape + (3,)}")
        coords = coords + flow[..., :2]
        depth = depth + flow[..., 2]

    effective_valid = np.isfinite(depth) & (depth > 0)

    if src.same_view(dst):
        # Same-view warps need no matrix chain; integer flows stay exact
        target_coords = coords.copy()
        target_depth = depth.copy()
    else:
        K_src_inv = np.linalg.inv(src.intrinsics)
        transform = relative_transform(src, dst)
        homo = np.concatenate([coords, np.ones(depth.shape + (1,))], axis=-1)
        rays = homo @ K_src_inv.T
        points = rays * depth[..., None]
        points = points @ transform[:3, :3].T + transform[:3, 3]
        projected = points @ dst.intrinsics.T
        target_depth = projected[..., 2]
        with np.errstate(divide='ignore', invalid='ignore'):
            target_coords = projected[..., :2] / target_depth[..., None]

    valid = effective_valid & (target_depth > 0) & np.all(np.isfinite(target_coords), axis=-1)
    target_coords = np.where(valid[..., None], target_coords, np.nan)
    return target_coords, target_depth, valid


def reproject_point(x: Sequence[float], depth: float, u: Optional[Sequence[float]],
                    src: CameraModel, dst: CameraModel) -> Reprojection:
    """
    Reproject a single pixel from `src` to `dst`.

    Args:
        x: (x, y) source pixel coordinates
        depth: source depth, metres, must be positive
        u: (dx, dy, dz) local flow or None for zero flow
        src, dst: cameras

    Returns:
        Reprojection(coords, depth); points behind the target camera come
        back with NaN coordinates and `valid == False`.

    Raises:
        DegenerateProjectionError: depth <= 0 or depth + u_z <= 0
    """
    u = (0.0, 0.0, 0.0) if u is None else tuple(float(v) for v in u)
    if not np.all(np.isfinite(u)):
        raise DomainError(f"Flow components must be finite, got {u}")
    if not depth > 0:
        raise DegenerateProjectionError(f"Depth must be positive, got {depth}")
    if not depth + u[2] > 0:
        raise DegenerateProjectionError(f"Effective depth d + u_z = {depth + u[2]} is not positive")

    coords, target_depth, _ = reproject_points(
        np.array([x], dtype=np.float64), np.array([depth], dtype=np.float64),
        np.array([u], dtype=np.float64), src, dst)
    return Reprojection((float(coords[0, 0]), float(coords[0, 1])), float(target_depth[0]))


def pixel_grid(height: int, width: int) -> np.ndarray:
    """(H, W, 2) grid of integer pixel coordinates (x, y) as floats."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([xs, ys], axis=-1)
