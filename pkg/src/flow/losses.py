"""
Unsupervised Flow Losses
========================

    L_ph     = beta * MAE + (1 - beta) * (1 - SSIM) / 2   per plane, masked, averaged
    L_smooth = mean of (1 - |grad alpha|) * exp(-a * |grad c|) * |grad u|
    L_of     = L_ph + lambda * L_smooth

Defaults: beta = 0.15, a = 10, lambda = 10.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from skimage.metrics import structural_similarity

from src.common.errors import DimensionError, DomainError
from src.flow.field import Flow3D
from src.flow.occlusion import occlusion_mask
from src.mpi.representation import MultiPlaneImage
from src.mpi.warping import sample_mpi

DEFAULT_BETA = 0.15
DEFAULT_EDGE_WEIGHT = 10.0
DEFAULT_SMOOTHNESS_WEIGHT = 10.0
SSIM_SIGMA = 1.5


def masked_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Gaussian-window SSIM (11x11, sigma 1.5) of two (H, W, C) images in [0, 1]."""
    return float(structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=SSIM_SIGMA,
                                       use_sample_covariance=False, channel_axis=-1))


def photometric_loss(m_ref: MultiPlaneImage, m_recon: MultiPlaneImage, o: np.ndarray,
                     beta: float = DEFAULT_BETA) -> float:
    """
    Masked MAE + SSIM loss on RGBA, computed per plane and averaged.

    Planes whose mask is empty do not contribute; an all-zero mask gives 0.
    """
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    if m_ref.shape != m_recon.shape or np.shape(o) != m_ref.shape:
        raise DimensionError(f"Shapes {m_ref.shape}, {m_recon.shape}, {np.shape(o)} do not match")
    o = np.asarray(o, dtype=np.float64)
    ref = m_ref.rgba()
    recon = m_recon.rgba()

    per_plane = []
    for z in range(m_ref.num_planes):
        mask = o[z]
        count = mask.sum()
        if count == 0:
            continue
        a = ref[z] * mask[..., None]
        b = recon[z] * mask[..., None]
        mae = np.abs(a - b).sum() / (count * ref.shape[-1])
        ssim = masked_ssim(a, b)
        per_plane.append(beta * mae + (1.0 - beta) * (1.0 - ssim) / 2.0)
    return float(np.mean(per_plane)) if per_plane else 0.0


def smoothness_loss(flow: Flow3D, m_ref: MultiPlaneImage,
                    edge_weight_a: float = DEFAULT_EDGE_WEIGHT) -> float:
    """
    Edge-aware first-order smoothness of the real flow within each plane.

    Forward differences along x and y; each axis term is a mean over voxels
    and flow components, and the loss is the mean of the two axis terms.
    """
    if flow.shape != m_ref.shape:
        raise DimensionError(f"Flow {flow.shape} does not match MPI {m_ref.shape}")
    u = flow.real_flow if flow.real_flow is not None else flow.reduce(m_ref.plane_depths)

    terms = []
    for axis in (2, 1):  # x, then y
        du = np.abs(np.diff(u, axis=axis))
        dc = np.abs(np.diff(m_ref.color, axis=axis)).mean(axis=-1)
        dalpha = np.abs(np.diff(m_ref.alpha, axis=axis))
        weight = (1.0 - dalpha) * np.exp(-edge_weight_a * dc)
        terms.append(float(np.mean(weight[..., None] * du)) if du.size else 0.0)
    return float(np.mean(terms))


def total_flow_loss(photometric: float, smoothness: float,
                    lam: float = DEFAULT_SMOOTHNESS_WEIGHT) -> float:
    return photometric + lam * smoothness


def backward_warp_mpi(mpi: MultiPlaneImage, flow: Flow3D) -> MultiPlaneImage:
    """Reconstruct the reference MPI by sampling `mpi` along the flow."""
    return sample_mpi(mpi, flow.xy, flow.depth_dist)


@dataclass
class FlowLoss:
    photometric: float
    smoothness: float
    total: float


def flow_loss(m_ref: MultiPlaneImage, m_src: MultiPlaneImage, flow: Flow3D,
              beta: float = DEFAULT_BETA, edge_weight_a: float = DEFAULT_EDGE_WEIGHT,
              lam: float = DEFAULT_SMOOTHNESS_WEIGHT, o: Optional[np.ndarray] = None) -> FlowLoss:
    """
    Full unsupervised loss of a flow from m_ref into m_src.

    The photometric term compares m_ref with m_src sampled along the flow,
    restricted to occupied reference voxels the occlusion mask keeps.
    """
    if o is None:
        o = occlusion_mask(m_ref, flow)
    mask = np.asarray(o, dtype=np.float64) * m_ref.occupied
    recon = backward_warp_mpi(m_src, flow)
    photometric = photometric_loss(m_ref, recon, mask, beta)
    smoothness = smoothness_loss(flow, m_ref, edge_weight_a)
    return FlowLoss(photometric, smoothness, total_flow_loss(photometric, smoothness, lam))
