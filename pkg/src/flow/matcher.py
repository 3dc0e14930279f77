"""
Coarse-to-Fine Correlation Matcher
==================================

Deterministic local-motion estimator between two MPIs in the same view.

ALGORITHM:
1. Features are premultiplied colour (RGB * alpha); masks are alpha > 0
2. x-y pyramid by 2x2 block means; depth is never downsampled
3. From the coarsest level: upsample the flow, search a window centred on
   each voxel's integer prior with the masked cost volume, pick the offset
   with the lowest masked patch SSD
4. Median-filter the x-y residual within each plane, compose with the prior
5. Voxels without a valid match keep the coarser flow

The decision departs from taking the argmax of the raw correlation score.
Scores are turned into a masked SSD, |h_ref|^2 + |h_src|^2 - 2 C score, and
averaged over the patch window; the smallest mean SSD wins. On its own the
correlation maximum drifts toward bright texture.

max_match_cost is stated at full resolution. Each 2x2 block mean quarters
the variance of unrelated texture, so level l accepts costs up to
max_match_cost / 4**l.

The returned flow points from the reference MPI into the source MPI.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import uniform_filter

from src.common.errors import DomainError
from src.flow.field import Flow3D, compose_residual_flow, upsample_flow
from src.flow.layers import displaced_indices, masked_correlation, mpi_to_volume
from src.mpi.representation import MultiPlaneImage


@dataclass
class MatcherConfig:
    """Matcher hyperparameters."""
    levels: int = 3
    radius_xy: int = 4
    s_z: int = 1
    patch_radius: int = 2
    max_match_cost: float = 0.01

    def validate(self):
        if self.levels < 1:
            raise DomainError(f"levels must be >= 1, got {self.levels}")
        if self.radius_xy < 0 or self.s_z < 0 or self.patch_radius < 0:
            raise DomainError("radius_xy, s_z and patch_radius must be non-negative")
        if self.max_match_cost <= 0:
            raise DomainError(f"max_match_cost must be positive, got {self.max_match_cost}")


def _block_mean(values: np.ndarray) -> np.ndarray:
    """2x2 mean over the H, W axes of a (..., H, W, Z) array, zero-padding odd sizes."""
    height, width = values.shape[-3], values.shape[-2]
    pad_h, pad_w = height % 2, width % 2
    pad = [(0, 0)] * (values.ndim - 3) + [(0, pad_h), (0, pad_w), (0, 0)]
    padded = np.pad(values, pad)
    h2, w2 = padded.shape[-3] // 2, padded.shape[-2] // 2
    shaped = padded.reshape(values.shape[:-3] + (h2, 2, w2, 2, values.shape[-1]))
    return shaped.mean(axis=(-4, -2))


def build_pyramid(mpi: MultiPlaneImage, levels: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """[(features (3, H, W, Z), mask (H, W, Z))] from fine to coarse."""
    features = mpi_to_volume(mpi.color * mpi.alpha[..., None])
    alpha = mpi.alpha.transpose(1, 2, 0)
    pyramid = [(features, (alpha > 0).astype(np.float64))]
    for _ in range(1, levels):
        features = _block_mean(features)
        alpha = _block_mean(alpha)
        pyramid.append((features, (alpha > 0).astype(np.float64)))
    return pyramid


def _masked_median3(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """
    Lower median over the 3x3 in-plane neighbourhood of valid entries.

    values: (H, W, Z), valid: (H, W, Z) bool. Invalid entries are returned unchanged.
    """
    height, width, _ = values.shape
    padded = np.pad(np.where(valid, values, np.nan), ((1, 1), (1, 1), (0, 0)), constant_values=np.nan)
    stack = np.stack([padded[dy:dy + height, dx:dx + width]
                      for dy in range(3) for dx in range(3)], axis=0)
    count = np.sum(~np.isnan(stack), axis=0)
    ordered = np.sort(stack, axis=0)
    pick = np.clip((count - 1) // 2, 0, 8)
    median = np.take_along_axis(ordered, pick[None], axis=0)[0]
    return np.where(valid & (count > 0), median, values)


def _match_level(h_ref: np.ndarray, m_ref: np.ndarray, h_src: np.ndarray, m_src: np.ndarray,
                 prior: np.ndarray, radius_xy: int, s_z: int, config: MatcherConfig,
                 max_cost: float
                 ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Best integer residual per voxel around the prior.

    Minimum of the patch-averaged SSD, not argmax of cv.scores; voxels whose
    best cost exceeds max_cost are unmatched and get a zero residual.

    Returns:
        (residual (H, W, Z, 3) as (dx, dy, dz), matched (H, W, Z) bool)
    """
    channels, height, width, depth = h_ref.shape
    cv = masked_correlation(h_ref, m_ref, h_src, m_src, (radius_xy, s_z), prior=prior)
    energy_ref = np.sum((h_ref * m_ref[None]) ** 2, axis=0)
    energy_src = np.sum((h_src * m_src[None]) ** 2, axis=0)

    size = (1, 2 * config.patch_radius + 1, 2 * config.patch_radius + 1, 1)
    costs = np.full(cv.scores.shape, np.inf)
    for i, offset in enumerate(cv.offsets):
        tx, ty, tz, _ = displaced_indices((height, width, depth), offset, prior)
        ssd = energy_ref + energy_src[ty, tx, tz] - 2.0 * channels * cv.scores[i]
        costs[i] = np.where(cv.validity[i] > 0, np.maximum(ssd, 0.0), 0.0)
    valid = cv.validity > 0
    total = uniform_filter(costs, size=size, mode='constant')
    support = uniform_filter(valid.astype(np.float64), size=size, mode='constant')
    with np.errstate(divide='ignore', invalid='ignore'):
        mean_cost = np.where(valid & (support > 0), total / support, np.inf) / channels

    best = np.argmin(mean_cost, axis=0)
    best_cost = np.take_along_axis(mean_cost, best[None], axis=0)[0]
    matched = best_cost <= max_cost
    residual = cv.offsets[best]
    residual[~matched] = 0

    for axis in range(2):
        residual[..., axis] = np.rint(
            _masked_median3(residual[..., axis].astype(np.float64), matched)).astype(np.int64)
    return residual, matched


def estimate_flow_matcher(m_ref: MultiPlaneImage, m_src: MultiPlaneImage,
                          config: Optional[MatcherConfig] = None) -> Flow3D:
    """
    Estimate the local flow from m_ref into m_src.

    Both MPIs must share a plane table and camera view.

    Raises:
        DomainError: mismatched plane tables
    """
    config = config or MatcherConfig()
    config.validate()
    if not m_ref.shares_planes(m_src):
        raise DomainError("Reference and source MPIs must share a plane table and grid")

    num_planes = m_ref.num_planes
    ref_pyramid = build_pyramid(m_ref, config.levels)
    src_pyramid = build_pyramid(m_src, config.levels)

    flow = None
    for level in reversed(range(config.levels)):
        h_ref, mask_ref = ref_pyramid[level]
        h_src, mask_src = src_pyramid[level]
        _, height, width, _ = h_ref.shape
        if flow is None:
            flow = Flow3D.zeros((num_planes, height, width), config.s_z)
        else:
            flow = upsample_flow(flow, (height, width), 2)

        radius = min(config.radius_xy, height - 1, width - 1)
        window = min(config.s_z, num_planes - 1)
        prior_xy = np.rint(flow.xy).astype(np.int64).transpose(1, 2, 0, 3)
        prior_z = flow.mode_offset().transpose(1, 2, 0)[..., None]
        prior = np.concatenate([prior_xy, prior_z], axis=-1)

        residual, matched = _match_level(h_ref, mask_ref, h_src, mask_src, prior,
                                         radius, window, config,
                                         config.max_match_cost / 4 ** level)
        residual = residual.transpose(2, 0, 1, 3)  # (Z, H, W, 3)
        depth_step = np.clip(residual[..., 2], -config.s_z, config.s_z)
        step = Flow3D.from_offsets(residual[..., :2].astype(np.float64), depth_step, config.s_z)
        flow = compose_residual_flow(flow, step, prior_centred=True)
    return flow
