"""
Synthetic Module

Deterministic layered scenes with known camera poses and object flows, and
an independent point-cloud renderer used to check the MPI warps.

Modules:
    - scene: Layer, SyntheticScene, render_sequence, object_flow, scene configs
    - oracle: oracle_pose_warp (z-buffered nearest-pixel reprojection)
"""

__all__ = ["scene", "oracle"]
