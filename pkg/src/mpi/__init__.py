"""
MPI Module

Multi-plane images: Z planes of colour, true depth and alpha sampled
uniformly in inverse depth, nearest plane first.

Modules:
    - representation: MultiPlaneImage, build_mpi, alpha_composite, visibility_mask
    - warping: warp_mpi and backward MPI sampling
"""

__all__ = ["representation", "warping"]
