"""
3D Flow Fields
==============

A Flow3D stores, per MPI voxel (z, y, x):
- xy: in-plane displacement (dx, dy) in pixels
- depth_dist: probabilities over depth-plane offsets z' in [-s_z, s_z]

Its real-valued reduction is

    u(x, z) = (dx, dy, sum_z' b_z'(x, z) d(z + z') - d(z))

with z + z' clamped to [0, Z - 1].

FLOW DUMP FORMAT (.flo3):
    Header: Z, H, W, C (int32 LE) with C = 2 + (2 s_z + 1)
    Body:   xy and depth_dist concatenated on the last axis (float32 LE)
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.common.errors import DimensionError, DomainError, InputError
from src.common.rawio import read_floats, read_header, write_floats, write_header
from src.geometry.splatting import sample_bilinear

DISTRIBUTION_TOLERANCE = 1e-5


@dataclass
class Flow3D:
    """Per-voxel x-y displacement plus a depth-offset distribution."""
    xy: np.ndarray
    depth_dist: np.ndarray
    s_z: int
    real_flow: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64)
        self.depth_dist = np.asarray(self.depth_dist, dtype=np.float64)
        if self.s_z < 0:
            raise DomainError(f"s_z must be non-negative, got {self.s_z}")
        if self.xy.ndim != 4 or self.xy.shape[-1] != 2:
            raise DimensionError(f"xy must be (Z, H, W, 2), got {self.xy.shape}")
        if self.depth_dist.shape != self.xy.shape[:3] + (self.window,):
            raise DimensionError(
                f"depth_dist {self.depth_dist.shape} must be {self.xy.shape[:3] + (self.window,)}")
        if not np.all(np.isfinite(self.xy)):
            raise DomainError("xy flow must be finite")
        sums = self.depth_dist.sum(axis=-1)
        if np.any(self.depth_dist < -DISTRIBUTION_TOLERANCE) or \
                np.any(np.abs(sums - 1.0) > DISTRIBUTION_TOLERANCE):
            raise DomainError("depth_dist must be a probability distribution at every voxel")

    @property
    def window(self) -> int:
        return 2 * self.s_z + 1

    @property
    def offsets(self) -> np.ndarray:
        """Depth-plane offsets z' covered by depth_dist."""
        return np.arange(-self.s_z, self.s_z + 1)

    @property
    def shape(self) -> Tuple[int, int, int]:
        """(Z, H, W)"""
        return self.xy.shape[:3]

    @classmethod
    def zeros(cls, shape: Tuple[int, int, int], s_z: int) -> 'Flow3D':
        """Zero x-y flow, all probability on z' = 0."""
        dist = np.zeros(tuple(shape) + (2 * s_z + 1,))
        dist[..., s_z] = 1.0
        return cls(np.zeros(tuple(shape) + (2,)), dist, s_z)

    @classmethod
    def from_offsets(cls, xy: np.ndarray, depth_offsets: np.ndarray, s_z: int) -> 'Flow3D':
        """Flow with a one-hot depth distribution at integer offsets in [-s_z, s_z]."""
        depth_offsets = np.asarray(depth_offsets, dtype=np.int64)
        if np.any(np.abs(depth_offsets) > s_z):
            raise DomainError(f"Depth offsets must lie in [-{s_z}, {s_z}]")
        dist = np.zeros(depth_offsets.shape + (2 * s_z + 1,))
        np.put_along_axis(dist, (depth_offsets + s_z)[..., None], 1.0, axis=-1)
        return cls(xy, dist, s_z)

    def expected_offset(self) -> np.ndarray:
        """(Z, H, W) expected plane offset E[z']."""
        return self.depth_dist @ self.offsets.astype(np.float64)

    def mode_offset(self) -> np.ndarray:
        """(Z, H, W) most probable plane offset."""
        return np.argmax(self.depth_dist, axis=-1) - self.s_z

    def reduce(self, plane_depths: np.ndarray) -> np.ndarray:
        """Compute and cache the real-valued flow."""
        self.real_flow = reduce_flow_to_real(self, plane_depths)
        return self.real_flow

    def copy(self) -> 'Flow3D':
        return Flow3D(self.xy.copy(), self.depth_dist.copy(), self.s_z,
                      None if self.real_flow is None else self.real_flow.copy())


def reduce_flow_to_real(flow: Flow3D, plane_depths: np.ndarray) -> np.ndarray:
    """
    Reduce a Flow3D to a (Z, H, W, 3) real flow (dx, dy, dz in metres).

    The depth component is the distribution-weighted expectation of plane
    depths minus the voxel's own plane depth.
    """
    plane_depths = np.asarray(plane_depths, dtype=np.float64)
    num_planes = flow.shape[0]
    if plane_depths.shape != (num_planes,):
        raise DimensionError(f"plane_depths has {plane_depths.shape} entries for {num_planes} planes")

    z = np.arange(num_planes)
    neighbour = np.clip(z[:, None] + flow.offsets[None, :], 0, num_planes - 1)
    window_depths = plane_depths[neighbour]  # (Z, window)
    expected = np.einsum('zhwk,zk->zhw', flow.depth_dist, window_depths)
    dz = expected - plane_depths[:, None, None]
    return np.concatenate([flow.xy, dz[..., None]], axis=-1)


def compose_residual_flow(prev: Flow3D, residual: Flow3D, prior_centred: bool = False) -> Flow3D:
    """
    Compose an upsampled coarser flow with a residual at the same scale.

    x-y displacements add. The depth distribution is the residual-weighted
    mixture of the previous distribution sampled at the displaced voxel
    (x + residual xy, z + z'), with the two offsets added and clamped into
    the window before renormalising.

    With prior_centred=True the residual was searched around each voxel's own
    prior, so the previous distribution is read at (x, z) itself.
    """
    if prev.shape != residual.shape or prev.s_z != residual.s_z:
        raise DimensionError(
            f"Cannot compose flows of shape {prev.shape}/s_z={prev.s_z} and "
            f"{residual.shape}/s_z={residual.s_z}")
    num_planes, height, width = prev.shape
    s_z = prev.s_z

    zs, ys, xs = np.meshgrid(np.arange(num_planes), np.arange(height), np.arange(width), indexing='ij')
    coords = np.stack([xs + residual.xy[..., 0], ys + residual.xy[..., 1]], axis=-1)

    composed = np.zeros_like(prev.depth_dist)
    for i, first in enumerate(residual.offsets):
        weight = residual.depth_dist[..., i]
        if not np.any(weight):
            continue
        if prior_centred:
            sampled = prev.depth_dist
        else:
            planes = np.clip(zs + first, 0, num_planes - 1)
            sampled = sample_bilinear(prev.depth_dist, planes, coords, clamp=True)
        for j, second in enumerate(prev.offsets):
            target = int(np.clip(first + second, -s_z, s_z)) + s_z
            composed[..., target] += weight * sampled[..., j]

    total = composed.sum(axis=-1, keepdims=True)
    composed = np.where(total > 0, composed / np.where(total > 0, total, 1.0), 0.0)
    composed[..., s_z] += np.where(total[..., 0] > 0, 0.0, 1.0)
    return Flow3D(prev.xy + residual.xy, composed, s_z)


def upsample_flow(flow: Flow3D, shape: Tuple[int, int], factor: int = 2) -> Flow3D:
    """
    Nearest-neighbour x-y upsampling to `shape` = (H, W).

    Displacements are multiplied by `factor`; depth is never resampled.
    """
    height, width = shape
    _, coarse_h, coarse_w = flow.shape
    rows = np.minimum(np.arange(height) // factor, coarse_h - 1)
    cols = np.minimum(np.arange(width) // factor, coarse_w - 1)
    xy = flow.xy[:, rows][:, :, cols] * factor
    dist = flow.depth_dist[:, rows][:, :, cols]
    return Flow3D(xy, dist, flow.s_z)


def downsample_flow(flow: Flow3D, shape: Tuple[int, int], factor: int = 2) -> Flow3D:
    """Strided x-y subsampling to `shape`, displacements divided by `factor`."""
    height, width = shape
    rows = np.minimum(np.arange(height) * factor, flow.shape[1] - 1)
    cols = np.minimum(np.arange(width) * factor, flow.shape[2] - 1)
    return Flow3D(flow.xy[:, rows][:, :, cols] / factor,
                  flow.depth_dist[:, rows][:, :, cols], flow.s_z)


def extrapolate_flow(u: Union[np.ndarray, Flow3D], k: int, k_prime: int) -> np.ndarray:
    """
    Linear motion model: scale the n -> n-k flow to n -> n+k'.

    Args:
        u: (Z, H, W, 3) real flow, or a Flow3D whose real_flow is cached
        k: past gap, >= 1
        k_prime: future step, 0 <= k' <= k - 1 (k' = 0 gives zero flow)

    Returns:
        -(k'/k) * u
    """
    if isinstance(u, Flow3D):
        if u.real_flow is None:
            raise DomainError("Flow3D must be reduced before extrapolation")
        u = u.real_flow
    if k <= 0:
        raise DomainError(f"Past gap k must be >= 1, got {k}")
    if k_prime < 0 or k_prime > k - 1:
        raise DomainError(f"Future step k' must lie in [0, {k - 1}], got {k_prime}")
    u = np.asarray(u, dtype=np.float64)
    return -(k_prime / k) * u


def save_flow_dump(path: Union[str, Path], flow: Flow3D):
    """Write xy and depth_dist as a raw {Z, H, W, C} dump."""
    data = np.concatenate([flow.xy, flow.depth_dist], axis=-1)
    with open(path, 'wb') as f:
        write_header(f, data.shape)
        write_floats(f, data)


def load_flow_dump(path: Union[str, Path]) -> Flow3D:
    """Read a dump written by save_flow_dump."""
    with open(path, 'rb') as f:
        dims = read_header(f, 4)
        data = read_floats(f, dims)
        if f.read(1):
            raise InputError(f"Trailing bytes in flow dump {path}")
    channels = dims[3]
    if channels < 3 or (channels - 3) % 2:
        raise InputError(f"Flow dump {path} has {channels} channels; expected 2 + (2 s_z + 1)")
    dist = data[..., 2:]
    # float32 storage can drift past the distribution tolerance
    dist = dist / dist.sum(axis=-1, keepdims=True)
    return Flow3D(data[..., :2], dist, (channels - 3) // 2)
