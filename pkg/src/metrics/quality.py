"""
Image and Flow Quality Measures
===============================

- PSNR with peak 1.0, capped at PSNR_CAP dB for identical frames
- SSIM with an 11x11 Gaussian window (sigma 1.5), channel-averaged
- AEPE on x-y flow over valid pixels
- Evaluation crop: 40 pixels off top and bottom, 60 off left and right
"""

from typing import Optional, Tuple

import numpy as np
from skimage.metrics import mean_squared_error, peak_signal_noise_ratio, structural_similarity

from src.common.errors import DimensionError, DomainError
from src.mpi.representation import MultiPlaneImage, front_plane_index

PSNR_CAP = 99.0
CROP_TOP_BOTTOM = 40
CROP_LEFT_RIGHT = 60
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def crop_eval_region(frame: np.ndarray, top_bottom: int = CROP_TOP_BOTTOM,
                     left_right: int = CROP_LEFT_RIGHT) -> np.ndarray:
    """Drop the evaluation margins from an (H, W, ...) frame."""
    frame = np.asarray(frame)
    height, width = frame.shape[:2]
    if height <= 2 * top_bottom or width <= 2 * left_right:
        raise DomainError(
            f"Frame {width}x{height} is too small for crop margins {left_right}/{top_bottom}")
    return frame[top_bottom:height - top_bottom, left_right:width - left_right]


def _check_pair(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"Frames differ in shape: {a.shape} vs {b.shape}")
    return a, b


def is_exact_match(a: np.ndarray, b: np.ndarray) -> bool:
    a, b = _check_pair(a, b)
    return bool(np.array_equal(a, b))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for frames in [0, 1]; identical frames report PSNR_CAP."""
    a, b = _check_pair(a, b)
    if mean_squared_error(a, b) == 0:
        return PSNR_CAP
    return float(min(peak_signal_noise_ratio(a, b, data_range=1.0), PSNR_CAP))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Channel-averaged Gaussian SSIM of two (H, W[, C]) frames in [0, 1]."""
    a, b = _check_pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise DomainError(f"SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    return float(structural_similarity(
        a, b, data_range=1.0, gaussian_weights=True, sigma=SSIM_SIGMA,
        use_sample_covariance=False, channel_axis=-1 if a.ndim == 3 else None))


def aepe(flow_est: np.ndarray, flow_gt: np.ndarray, valid_mask: Optional[np.ndarray] = None) -> float:
    """
    Mean endpoint error of the x-y components over valid pixels.

    Returns NaN when no pixel is valid.
    """
    flow_est, flow_gt = _check_pair(flow_est, flow_gt)
    error = np.linalg.norm(flow_est[..., :2] - flow_gt[..., :2], axis=-1)
    if valid_mask is None:
        valid_mask = np.ones(error.shape, dtype=bool)
    valid_mask = np.asarray(valid_mask, dtype=bool)
    if valid_mask.shape != error.shape:
        raise DimensionError(f"Valid mask {valid_mask.shape} does not match flow {error.shape}")
    if not valid_mask.any():
        return float('nan')
    return float(error[valid_mask].mean())


def composite_flow_to_pixels(flow: np.ndarray, mpi: MultiPlaneImage) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-pixel flow taken at each pixel's nearest occupied plane.

    Args:
        flow: (Z, H, W, C) per-voxel flow on mpi's grid

    Returns:
        (flow (H, W, C), valid (H, W)) with zeros at empty pixels
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.shape[:3] != mpi.shape:
        raise DimensionError(f"Flow {flow.shape} does not match MPI {mpi.shape}")
    front = front_plane_index(mpi)
    valid = front >= 0
    picked = np.take_along_axis(flow, np.maximum(front, 0)[None, ..., None], axis=0)[0]
    return np.where(valid[..., None], picked, 0.0), valid
