"""
MPI Warping
===========

Forward warp (pose warp plus local flow) of whole MPIs by reprojection and
bilinear splatting, and backward sampling of an MPI under a Flow3D.

FORWARD WARP, per occupied voxel (x, z):
1. Reproject with the pose-warping operator using flow u(x, z) (zero if absent)
2. Pick the target plane nearest the reprojected depth (inverse depth)
3. Splat colour and reprojected depth with weight alpha

Target alpha is the accumulated splat weight clamped to [0, 1]. Pixels no
voxel reaches stay empty on every plane (holes).
"""

from typing import Optional, Union

import numpy as np

from src.common.errors import DimensionError
from src.flow.field import Flow3D
from src.geometry.camera import CameraModel, pixel_grid, reproject_points
from src.geometry.splatting import sample_bilinear, splat_to_planes
from src.mpi.representation import MultiPlaneImage, assign_planes


def _real_flow(local_flow: Union[Flow3D, np.ndarray, None], mpi: MultiPlaneImage) -> Optional[np.ndarray]:
    if local_flow is None:
        return None
    if isinstance(local_flow, Flow3D):
        if local_flow.shape != mpi.shape:
            raise DimensionError(f"Flow shape {local_flow.shape} does not match MPI {mpi.shape}")
        if local_flow.real_flow is None:
            local_flow.reduce(mpi.plane_depths)
        return local_flow.real_flow
    flow = np.asarray(local_flow, dtype=np.float64)
    if flow.shape != mpi.shape + (3,):
        raise DimensionError(f"Real flow {flow.shape} must be {mpi.shape + (3,)}")
    return flow


def warp_mpi(mpi: MultiPlaneImage, src: CameraModel, dst: CameraModel,
             local_flow: Union[Flow3D, np.ndarray, None] = None,
             target_plane_depths: Optional[np.ndarray] = None) -> MultiPlaneImage:
    """
    Forward-warp an MPI from view `src` to view `dst`.

    Args:
        mpi: source MPI (in src's view)
        src, dst: cameras; dst.image_size sets the output size
        local_flow: Flow3D or (Z, H, W, 3) real flow on mpi's grid, or None
        target_plane_depths: plane table of the output (default: mpi's)

    Returns:
        Warped MultiPlaneImage on the target plane table.
    """
    num_planes, height, width = mpi.shape
    if target_plane_depths is None:
        target_plane_depths = mpi.plane_depths
    target_plane_depths = np.asarray(target_plane_depths, dtype=np.float64)
    if target_plane_depths.shape != (num_planes,):
        raise DimensionError(
            f"Target plane table has {target_plane_depths.shape} entries for {num_planes} planes")
    if src.image_size != (width, height):
        raise DimensionError(f"Source camera size {src.image_size} does not match MPI {(width, height)}")
    flow = _real_flow(local_flow, mpi)

    occupied = mpi.occupied
    grid = np.broadcast_to(pixel_grid(height, width), (num_planes, height, width, 2))
    coords, depth, valid = reproject_points(
        grid[occupied], mpi.depth[occupied],
        None if flow is None else flow[occupied], src, dst)

    planes = np.zeros(depth.shape, dtype=np.int64)
    planes[valid] = assign_planes(depth[valid], target_plane_depths)
    weights = np.where(valid, mpi.alpha[occupied], 0.0)
    payload = np.concatenate([mpi.color[occupied], np.where(valid, depth, 0.0)[:, None]], axis=-1)

    out_width, out_height = dst.image_size
    splat = splat_to_planes(coords, planes, weights, payload, num_planes, out_height, out_width)
    hit = splat.valid
    return MultiPlaneImage(
        color=np.where(hit[..., None], splat.payload[..., :3], 0.0),
        depth=np.where(hit, splat.payload[..., 3], 0.0),
        alpha=np.where(hit, np.clip(splat.weight, 0.0, 1.0), 0.0),
        plane_depths=target_plane_depths.copy(),
    )


def sample_mpi(mpi: MultiPlaneImage, xy: np.ndarray, depth_dist: np.ndarray) -> MultiPlaneImage:
    """
    Backward-sample an MPI: out(x, z) = sum_z' b_z' * mpi(x + xy, z + z').

    Bilinear in x-y with zeros outside the image; z + z' is clamped to the
    plane range. Used to reconstruct a reference MPI from a source MPI and
    the flow between them.
    """
    num_planes, height, width = mpi.shape
    xy = np.asarray(xy, dtype=np.float64)
    depth_dist = np.asarray(depth_dist, dtype=np.float64)
    if xy.shape != mpi.shape + (2,) or depth_dist.shape[:3] != mpi.shape:
        raise DimensionError(f"Flow {xy.shape}/{depth_dist.shape} does not match MPI {mpi.shape}")
    s_z = (depth_dist.shape[-1] - 1) // 2

    stack = np.concatenate([mpi.color, mpi.depth[..., None], mpi.alpha[..., None]], axis=-1)
    zs, ys, xs = np.meshgrid(np.arange(num_planes), np.arange(height), np.arange(width), indexing='ij')
    coords = np.stack([xs + xy[..., 0], ys + xy[..., 1]], axis=-1)

    out = np.zeros_like(stack)
    for i, offset in enumerate(range(-s_z, s_z + 1)):
        weight = depth_dist[..., i]
        if not np.any(weight):
            continue
        planes = np.clip(zs + offset, 0, num_planes - 1)
        out += weight[..., None] * sample_bilinear(stack, planes, coords)
    return MultiPlaneImage(out[..., :3], out[..., 3], np.clip(out[..., 4], 0.0, 1.0),
                           mpi.plane_depths.copy())
