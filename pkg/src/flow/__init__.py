"""
Flow Module

Local 3D motion between two MPIs in one camera view.

Modules:
    - field: Flow3D, real-valued reduction, residual composition, extrapolation
    - layers: dense and partial 3D convolution, masked correlation
    - matcher: deterministic coarse-to-fine correlation matcher (default backend)
    - network: partial-convolution pyramid network (loadable forward pass)
    - weights: layer tables and the weight-file format
    - occlusion: occlusion mask for the photometric loss
    - losses: photometric, smoothness and total loss
    - visualize: colour-wheel flow images
"""

__all__ = ["field", "layers", "matcher", "network", "weights", "occlusion", "losses", "visualize"]
