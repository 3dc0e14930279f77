"""
Point-cloud z-buffer renderer.

Every source pixel is unprojected with its depth (plus optional local flow),
transformed into the target view and written to the nearest target pixel if
it is closer than what is already there. No splatting and no MPI, so it
serves as an independent check of warp_mpi.
"""

from typing import NamedTuple, Optional

import numpy as np

from src.common.errors import DimensionError
from src.geometry.camera import CameraModel, pixel_grid, reproject_points
from src.geometry.kernels import zbuffer_render


class OracleRender(NamedTuple):
    """Rendered frame, its depth and the pixels nothing reached."""
    frame: np.ndarray
    depth: np.ndarray
    holes: np.ndarray


def oracle_pose_warp(frame: np.ndarray, depth: np.ndarray, src: CameraModel, dst: CameraModel,
                     flow: Optional[np.ndarray] = None) -> OracleRender:
    """
    Warp an RGB-D frame from `src` to `dst` by z-buffered reprojection.

    Args:
        frame: (H, W, C) values
        depth: (H, W) metres
        flow: optional (H, W, 3) local flow (dx, dy, dz) in the source view

    Returns:
        OracleRender with zeros at holes (depth 0 there).
    """
    frame = np.asarray(frame, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if frame.ndim == 2:
        frame = frame[..., None]
    height, width = depth.shape
    if frame.shape[:2] != (height, width):
        raise DimensionError(f"frame {frame.shape} and depth {depth.shape} differ")

    coords, target_depth, valid = reproject_points(pixel_grid(height, width), depth, flow, src, dst)
    out_width, out_height = dst.image_size
    zbuffer = np.full((out_height, out_width), np.inf)
    out = np.zeros((out_height, out_width, frame.shape[-1]))
    zbuffer_render(np.ascontiguousarray(coords.reshape(-1, 2)),
                   np.ascontiguousarray(np.where(valid, target_depth, np.nan).reshape(-1)),
                   np.ascontiguousarray(frame.reshape(-1, frame.shape[-1])), zbuffer, out)
    holes = ~np.isfinite(zbuffer)
    return OracleRender(out, np.where(holes, 0.0, zbuffer), holes)
