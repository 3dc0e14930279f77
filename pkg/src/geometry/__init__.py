"""
Geometry Module

Pinhole cameras, homogeneous reprojection and forward bilinear splatting.

Modules:
    - camera: CameraModel, reproject_point / reproject_points
    - splatting: splat_forward and the multi-plane splat used by MPI warping
    - kernels: numba loops behind the bilinear splat and the z-buffer render
"""

__all__ = ["camera", "splatting", "kernels"]
