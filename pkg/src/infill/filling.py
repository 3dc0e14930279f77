"""
Disocclusion Infilling
======================

HOLES: pixels whose alpha sums to less than HOLE_EPSILON over all planes;
every plane is marked at those pixels.

NEAREST-VALID VECTORS (per plane):
- Each hole voxel points to the nearest voxel of the same plane with alpha > 0
- Euclidean distance; ties go to the candidate first in scanline order
- Planes without any valid voxel get no vectors and stay empty there

COPY: colour, alpha and depth are read at (x + v) in the same plane by
bilinear sampling (exact for integer vectors). Only hole voxels change.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from src.common.errors import DimensionError, DomainError
from src.geometry.splatting import sample_bilinear
from src.mpi.representation import MultiPlaneImage

HOLE_EPSILON = 1e-6
METHODS = ("nearest", "network")


@dataclass
class InfillVectors:
    """Per-voxel (dx, dy) copy offsets, zero outside the disocclusion mask."""
    vectors: np.ndarray
    disocclusion_mask: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.disocclusion_mask = np.asarray(self.disocclusion_mask, dtype=bool)
        if self.vectors.shape != self.disocclusion_mask.shape + (2,):
            raise DimensionError(
                f"vectors {self.vectors.shape} do not match mask {self.disocclusion_mask.shape}")
        self.vectors = np.where(self.disocclusion_mask[..., None], self.vectors, 0.0)


def detect_disocclusions(mpi: MultiPlaneImage) -> np.ndarray:
    """(Z, H, W) bool mask, True on every plane at empty pixels."""
    empty = mpi.alpha.sum(axis=0) < HOLE_EPSILON
    return np.broadcast_to(empty, mpi.shape).copy()


def _nearest_in_plane(valid: np.ndarray, holes: np.ndarray) -> np.ndarray:
    """
    (H, W, 2) offsets (dx, dy) from each hole to its nearest valid pixel.

    distance_transform_edt gives the exact distance; among the offsets at
    that distance the first valid one in scanline order is taken.
    """
    height, width = valid.shape
    vectors = np.zeros((height, width, 2))
    distance = distance_transform_edt(~valid)
    ys, xs = np.nonzero(holes & ~valid)
    if ys.size == 0:
        return vectors
    squared = np.rint(distance[ys, xs] ** 2).astype(np.int64)

    for d2 in np.unique(squared):
        pick = squared == d2
        py, px = ys[pick], xs[pick]
        found = np.zeros(py.shape, dtype=bool)
        reach = int(np.floor(np.sqrt(d2)))
        for dy in range(-reach, reach + 1):
            rest = d2 - dy * dy
            dx_abs = int(round(np.sqrt(rest)))
            if dx_abs * dx_abs != rest:
                continue
            for dx in sorted({-dx_abs, dx_abs}):
                ty, tx = py + dy, px + dx
                inside = (ty >= 0) & (ty < height) & (tx >= 0) & (tx < width)
                hit = ~found & inside
                hit[hit] = valid[ty[hit], tx[hit]]
                vectors[py[hit], px[hit]] = (dx, dy)
                found |= hit
    return vectors


def nearest_valid_vectors(mpi: MultiPlaneImage, mask: Optional[np.ndarray] = None) -> InfillVectors:
    """Nearest-valid infilling vectors for the hole voxels of every plane."""
    if mask is None:
        mask = detect_disocclusions(mpi)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != mpi.shape:
        raise DimensionError(f"Mask {mask.shape} does not match MPI {mpi.shape}")
    vectors = np.zeros(mpi.shape + (2,))
    for z in range(mpi.num_planes):
        valid = mpi.alpha[z] > 0
        if not valid.any() or not mask[z].any():
            continue
        vectors[z] = _nearest_in_plane(valid, mask[z])
    return InfillVectors(vectors, mask)


def apply_infill_vectors(mpi: MultiPlaneImage, infill: InfillVectors) -> MultiPlaneImage:
    """Copy colour, alpha and depth into hole voxels along the vectors."""
    if infill.disocclusion_mask.shape != mpi.shape:
        raise DimensionError(f"Vectors {infill.disocclusion_mask.shape} do not match MPI {mpi.shape}")
    holes = infill.disocclusion_mask
    zs, ys, xs = np.nonzero(holes)
    out = mpi.copy()
    if zs.size == 0:
        return out
    stack = np.concatenate([mpi.color, mpi.depth[..., None], mpi.alpha[..., None]], axis=-1)
    v = infill.vectors[zs, ys, xs]
    coords = np.stack([xs + v[:, 0], ys + v[:, 1]], axis=-1)
    sampled = sample_bilinear(stack, zs, coords)
    out.color[zs, ys, xs] = sampled[:, :3]
    out.depth[zs, ys, xs] = sampled[:, 3]
    out.alpha[zs, ys, xs] = np.clip(sampled[:, 4], 0.0, 1.0)
    return out


def infill_step(mpi: MultiPlaneImage, method: str = "nearest", network=None) -> MultiPlaneImage:
    """
    One infilling pass.

    Args:
        method: "nearest" or "network"
        network: InfillNetwork, required for method="network"
    """
    if method not in METHODS:
        raise DomainError(f"Unknown infill method {method!r}; expected one of {METHODS}")
    mask = detect_disocclusions(mpi)
    if not mask.any():
        return mpi.copy()
    if method == "network":
        if network is None:
            raise DomainError("method='network' needs an InfillNetwork")
        vectors = network.predict_vectors(mpi, mask)
    else:
        vectors = nearest_valid_vectors(mpi, mask)
    return apply_infill_vectors(mpi, vectors)


def infill_iterative(mpi: MultiPlaneImage, method: str = "nearest", g: int = 3,
                     network=None) -> MultiPlaneImage:
    """Apply infill_step g times, feeding each result into the next pass."""
    if g < 1:
        raise DomainError(f"Infill iterations g must be >= 1, got {g}")
    for _ in range(g):
        mpi = infill_step(mpi, method, network)
    return mpi


def fill_remaining(mpi: MultiPlaneImage) -> Tuple[MultiPlaneImage, int]:
    """
    Nearest-valid pass over whatever holes are left.

    Returns:
        (filled MPI, number of voxels that received content)
    """
    mask = detect_disocclusions(mpi)
    if not mask.any():
        return mpi, 0
    filled = apply_infill_vectors(mpi, nearest_valid_vectors(mpi, mask))
    return filled, int(np.count_nonzero(mask & (filled.alpha > 0)))
