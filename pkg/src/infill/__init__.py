"""
Infill Module

Fills disocclusions of a warped MPI by copying colour, alpha and depth along
per-plane infilling vectors.

Modules:
    - filling: hole detection, nearest-valid vectors, copy, iterative driver
    - network: encoder-decoder that predicts infilling vectors
"""

__all__ = ["filling", "network"]
