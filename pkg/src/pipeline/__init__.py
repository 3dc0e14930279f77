"""
Pipeline Module

End-to-end frame prediction: sequence ingestion, camera compensation, local
flow estimation and extrapolation, warping, infilling and compositing.

Modules:
    - dataset: SequenceDataset and its on-disk layouts
    - predictor: PredictionRequest, PredictionResult, predict_frames
"""

__all__ = ["dataset", "predictor"]
