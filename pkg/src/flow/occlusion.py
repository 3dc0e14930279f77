"""
Occlusion mask for the photometric loss.

A reference voxel is occluded when, after forward-warping the reference MPI
with its own flow, something in front of it covers the place it moved to.
"""

from typing import Optional

import numpy as np

from src.flow.field import Flow3D
from src.geometry.camera import CameraModel, identity_camera, make_intrinsics
from src.geometry.splatting import sample_bilinear
from src.mpi.representation import MultiPlaneImage, visibility_mask
from src.mpi.warping import warp_mpi

VISIBILITY_THRESHOLD = 0.5


def same_view_camera(mpi: MultiPlaneImage) -> CameraModel:
    """Unit camera on the MPI's grid; both ends of a same-view warp."""
    _, height, width = mpi.shape
    return identity_camera(make_intrinsics(1.0, 1.0, 0.0, 0.0), (width, height))


def occlusion_mask(m_ref: MultiPlaneImage, flow: Flow3D,
                   camera: Optional[CameraModel] = None) -> np.ndarray:
    """
    Binary (Z, H, W) mask, 0 where a reference voxel becomes occluded.

    1. Forward-warp m_ref with the flow in the same view
    2. Visibility of the warped MPI
    3. Sample it back at (x + a, z + round(E[z'])), reading 1 outside the image
    4. Threshold at 0.5
    """
    camera = camera or same_view_camera(m_ref)
    real = flow.real_flow if flow.real_flow is not None else flow.reduce(m_ref.plane_depths)
    warped = warp_mpi(m_ref, camera, camera, real)
    visibility = visibility_mask(warped)

    num_planes, height, width = m_ref.shape
    zs, ys, xs = np.meshgrid(np.arange(num_planes), np.arange(height), np.arange(width), indexing='ij')
    planes = np.clip(zs + np.rint(flow.expected_offset()).astype(np.int64), 0, num_planes - 1)
    coords = np.stack([xs + flow.xy[..., 0], ys + flow.xy[..., 1]], axis=-1)
    sampled = sample_bilinear(visibility[..., None], planes, coords, fill=1.0)[..., 0]
    return (sampled > VISIBILITY_THRESHOLD).astype(np.float64)
