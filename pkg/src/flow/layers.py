"""
Volume Layers
=============

Dense and partial 3D convolution, masked correlation and feature warping on
feature volumes.

LAYOUT:
- features: (C, H, W, Z)
- masks: (H, W, Z) in {0, 1}
- kernels: (O, C, kh, kw, kz); stride and padding in (h, w, z) order

Depth is a regular volume axis here; the MPI plane index becomes Z.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.signal import correlate
from scipy.special import softmax as _softmax

from src.common.errors import DimensionError, DomainError
from src.flow.field import Flow3D
from src.geometry.splatting import sample_bilinear

Triple = Tuple[int, int, int]


def _triple(value, name: str) -> Triple:
    if np.isscalar(value):
        value = (value, value, value)
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise DimensionError(f"{name} must have 3 entries (h, w, z), got {value}")
    return value


def output_size(size: Triple, kernel: Triple, stride: Triple, padding: Triple) -> Triple:
    out = tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(size, kernel, stride, padding))
    if any(o <= 0 for o in out):
        raise DimensionError(f"Kernel {kernel} with padding {padding} does not fit volume {size}")
    return out


def _check_layer(x: np.ndarray, kernel: np.ndarray, bias: Optional[np.ndarray],
                 stride, padding) -> Tuple[Triple, Triple, Triple]:
    if x.ndim != 4:
        raise DimensionError(f"Features must be (C, H, W, Z), got {x.shape}")
    if kernel.ndim != 5 or 0 in kernel.shape:
        raise DimensionError(f"Kernel must be a non-empty (O, C, kh, kw, kz) array, got {kernel.shape}")
    if kernel.shape[1] != x.shape[0]:
        raise DimensionError(f"Kernel expects {kernel.shape[1]} channels, features have {x.shape[0]}")
    if bias is not None and np.shape(bias) != (kernel.shape[0],):
        raise DimensionError(f"Bias {np.shape(bias)} must be ({kernel.shape[0]},)")
    stride = _triple(stride, "stride")
    padding = _triple(padding, "padding")
    if any(s < 1 for s in stride):
        raise DimensionError(f"Stride must be >= 1, got {stride}")
    if any(p < 0 for p in padding):
        raise DimensionError(f"Padding must be >= 0, got {padding}")
    out = output_size(x.shape[1:], kernel.shape[2:], stride, padding)
    return stride, padding, out


def _correlate_taps(volume: np.ndarray, kernel: np.ndarray, stride: Triple, padding: Triple,
                    out: Triple) -> np.ndarray:
    """
    Strided multi-channel cross-correlation.

    Each output channel is one valid-mode scipy correlation of the padded
    (C, H, W, Z) volume against its (C, kh, kw, kz) kernel; the channel axis
    collapses because both span all C. The direct method keeps window sums
    of 0/1 masks exact.
    """
    ph, pw, pz = padding
    padded = np.pad(volume, ((0, 0), (ph, ph), (pw, pw), (pz, pz)))
    sh, sw, sz = stride
    oh, ow, oz = out
    result = np.empty((kernel.shape[0], oh, ow, oz))
    for o in range(kernel.shape[0]):
        full = correlate(padded, kernel[o], mode="valid", method="direct")[0]
        result[o] = full[::sh, ::sw, ::sz][:oh, :ow, :oz]
    return result


def conv3d(x: np.ndarray, kernel: np.ndarray, bias: Optional[np.ndarray] = None,
           stride=1, padding=0) -> np.ndarray:
    """Dense 3D convolution (cross-correlation) with zero padding."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    stride, padding, out = _check_layer(x, kernel, bias, stride, padding)
    result = _correlate_taps(x, kernel, stride, padding, out)
    if bias is not None:
        result = result + np.asarray(bias, dtype=np.float64)[:, None, None, None]
    return result


def _window_count(size: Triple, kernel: Triple, stride: Triple, padding: Triple,
                  out: Triple, mask: Optional[np.ndarray] = None) -> np.ndarray:
    ones = np.ones((1, 1) + kernel)
    volume = np.ones((1,) + size) if mask is None else mask[None].astype(np.float64)
    return _correlate_taps(volume, ones, stride, padding, out)[0]


def strided_mask(mask: np.ndarray, kernel: Triple, stride: Triple, padding: Triple,
                 out: Triple) -> np.ndarray:
    """
    Sample a mask at each output window's centre voxel.

    Occupancy is only carried forward, never grown.
    """
    index = []
    for n, k, s, p, o in zip(mask.shape, kernel, stride, padding, out):
        centre = np.arange(o) * s - p + k // 2
        index.append(centre)
    inside = [(c >= 0) & (c < n) for c, n in zip(index, mask.shape)]
    clipped = [np.clip(c, 0, n - 1) for c, n in zip(index, mask.shape)]
    sampled = mask[np.ix_(*clipped)]
    return sampled * np.einsum('i,j,k->ijk', *[v.astype(np.float64) for v in inside])


def partial_conv3(x: np.ndarray, mask: np.ndarray, kernel: np.ndarray,
                  bias: Optional[np.ndarray] = None, stride=1, padding=0
                  ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Partial 3D convolution without mask dilation.

    output(p) = W . (X_p * M_p) * (N_p / sum M_p) + bias  where sum M_p > 0, else 0

    N_p counts the window taps inside the volume, so padding never counts as
    valid and an all-ones mask reproduces conv3d exactly.

    Returns:
        (features (O, Ho, Wo, Zo), mask (Ho, Wo, Zo))
    """
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != x.shape[1:]:
        raise DimensionError(f"Mask {mask.shape} does not match features {x.shape}")
    stride, padding, out = _check_layer(x, kernel, bias, stride, padding)
    ksize = kernel.shape[2:]

    raw = _correlate_taps(x * mask[None], kernel, stride, padding, out)
    mask_sum = _window_count(mask.shape, ksize, stride, padding, out, mask)
    inside = _window_count(mask.shape, ksize, stride, padding, out)
    covered = mask_sum > 0
    scale = np.where(covered, inside / np.where(covered, mask_sum, 1.0), 0.0)

    result = raw * scale[None]
    if bias is not None:
        result = result + np.asarray(bias, dtype=np.float64)[:, None, None, None]
    result = np.where(covered[None], result, 0.0)
    return result, strided_mask(mask, ksize, stride, padding, out)


@dataclass
class CostVolume:
    """
    Masked correlation scores over a search window.

    scores, validity: (D, H, W, Z); offsets: (D, 3) as (dx, dy, dz) with the
    zero displacement first.
    """
    scores: np.ndarray
    validity: np.ndarray
    offsets: np.ndarray

    @property
    def num_displacements(self) -> int:
        return self.offsets.shape[0]


def search_offsets(radius_xy: int, s_z: int) -> np.ndarray:
    """All (dx, dy, dz) in the window, ordered by depth distance, then planar distance."""
    offsets = [(dx, dy, dz)
               for dz in range(-s_z, s_z + 1)
               for dy in range(-radius_xy, radius_xy + 1)
               for dx in range(-radius_xy, radius_xy + 1)]
    offsets.sort(key=lambda o: (abs(o[2]), o[0] ** 2 + o[1] ** 2, o[2], o[1], o[0]))
    return np.array(offsets, dtype=np.int64)


def displaced_indices(shape: Triple, offset: Sequence[int], prior: Optional[np.ndarray] = None):
    """
    Clipped target indices (tx, ty, tz) of every voxel displaced by `offset`
    = (dx, dy, dz) plus an optional per-voxel integer prior, and the mask of
    targets that fall inside the volume.
    """
    height, width, depth = shape
    ys, xs, zs = np.meshgrid(np.arange(height), np.arange(width), np.arange(depth), indexing='ij')
    if prior is not None:
        prior = np.asarray(prior, dtype=np.int64)
        xs, ys, zs = xs + prior[..., 0], ys + prior[..., 1], zs + prior[..., 2]
    tx, ty, tz = xs + int(offset[0]), ys + int(offset[1]), zs + int(offset[2])
    inside = (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height) & (tz >= 0) & (tz < depth)
    return (np.clip(tx, 0, width - 1), np.clip(ty, 0, height - 1), np.clip(tz, 0, depth - 1), inside)


def masked_correlation(h1: np.ndarray, mask1: np.ndarray, h2: np.ndarray, mask2: np.ndarray,
                       search: Sequence[int], prior: Optional[np.ndarray] = None) -> CostVolume:
    """
    Correlate masked features of two volumes over a displacement window.

    score(x, z, d) = <h1 m1 (x, z), h2 m2 (x + d, z + d_z)> / C
    validity(x, z, d) = m1(x, z) m2(x + d, z + d_z), zero outside the volume

    Args:
        h1, h2: (C, H, W, Z) features on the same plane table
        mask1, mask2: (H, W, Z) binary masks
        search: (radius_xy, s_z)
        prior: optional (H, W, Z, 3) integer (dx, dy, dz) added to every
            displacement, centring the window per voxel

    Raises:
        DomainError: search window as large as the volume
    """
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    mask1 = np.asarray(mask1, dtype=np.float64)
    mask2 = np.asarray(mask2, dtype=np.float64)
    if h1.shape != h2.shape or h1.ndim != 4:
        raise DimensionError(f"Feature volumes {h1.shape} and {h2.shape} must match")
    if mask1.shape != h1.shape[1:] or mask2.shape != h1.shape[1:]:
        raise DimensionError(f"Masks {mask1.shape}/{mask2.shape} do not match features {h1.shape}")
    radius_xy, s_z = int(search[0]), int(search[1])
    channels, height, width, depth = h1.shape
    if radius_xy < 0 or s_z < 0:
        raise DomainError(f"Search window must be non-negative, got {tuple(search)}")
    if radius_xy >= height or radius_xy >= width or s_z >= depth:
        raise DomainError(
            f"Search window ({radius_xy}, {s_z}) must be smaller than the volume {(height, width, depth)}")

    offsets = search_offsets(radius_xy, s_z)
    f1 = h1 * mask1[None]
    f2 = h2 * mask2[None]
    if prior is not None and np.shape(prior) != (height, width, depth, 3):
        raise DimensionError(f"Prior {np.shape(prior)} must be {(height, width, depth, 3)}")

    scores = np.zeros((len(offsets), height, width, depth))
    validity = np.zeros_like(scores)
    for i, offset in enumerate(offsets):
        tx, ty, tz, inside = displaced_indices((height, width, depth), offset, prior)
        valid = mask1 * mask2[ty, tx, tz] * inside
        corr = np.einsum('chwz,chwz->hwz', f1, f2[:, ty, tx, tz]) / channels
        validity[i] = valid
        scores[i] = np.where(valid > 0, corr, 0.0)
    return CostVolume(scores, validity, offsets)


def warp_features(h: np.ndarray, mask: np.ndarray, flow: Flow3D) -> Tuple[np.ndarray, np.ndarray]:
    """
    Backward-warp a feature volume by a Flow3D.

    Bilinear in x-y (zeros outside), expectation over the depth distribution;
    the warped mask is binarised at 0.5.
    """
    channels, height, width, depth = h.shape
    if flow.shape != (depth, height, width):
        raise DimensionError(f"Flow {flow.shape} does not match volume {(depth, height, width)}")
    stack = np.concatenate([h, mask[None]], axis=0).transpose(3, 1, 2, 0)  # (Z, H, W, C+1)
    zs, ys, xs = np.meshgrid(np.arange(depth), np.arange(height), np.arange(width), indexing='ij')
    coords = np.stack([xs + flow.xy[..., 0], ys + flow.xy[..., 1]], axis=-1)

    out = np.zeros_like(stack)
    for i, offset in enumerate(flow.offsets):
        weight = flow.depth_dist[..., i]
        if not np.any(weight):
            continue
        planes = np.clip(zs + offset, 0, depth - 1)
        out += weight[..., None] * sample_bilinear(stack, planes, coords)
    out = out.transpose(3, 1, 2, 0)
    warped_mask = (out[-1] > 0.5).astype(np.float64)
    return out[:-1] * warped_mask[None], warped_mask


def mpi_to_volume(values: np.ndarray) -> np.ndarray:
    """(Z, H, W, C) MPI-layout array to (C, H, W, Z)."""
    return np.asarray(values).transpose(3, 1, 2, 0)


def volume_to_mpi(volume: np.ndarray) -> np.ndarray:
    """(C, H, W, Z) volume to (Z, H, W, C) MPI layout."""
    return np.asarray(volume).transpose(3, 1, 2, 0)


def leaky_relu(x: np.ndarray, slope: float = 0.1) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def softmax(x: np.ndarray, axis: int = 0) -> np.ndarray:
    return _softmax(x, axis=axis)
