"""
Forward bilinear splatting.

A source point at non-integer target coordinates spreads its weight over the
four neighbouring pixels; a target pixel's value is the weighted mean of the
payloads that reached it.
"""

from typing import NamedTuple, Optional

import numpy as np

from src.common.errors import DimensionError
from src.geometry.kernels import empty_accumulators, splat_bilinear

SPLAT_EPSILON = 1e-6


class SplatResult(NamedTuple):
    """Normalised payload and the raw accumulated weight."""
    payload: np.ndarray
    weight: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        """Pixels that received more than SPLAT_EPSILON weight."""
        return self.weight > SPLAT_EPSILON


def splat_to_planes(coords: np.ndarray, planes: np.ndarray, weights: np.ndarray,
                    payload: np.ndarray, num_planes: int, height: int, width: int
                    ) -> SplatResult:
    """
    Splat N points into a (Z, H, W, C) stack.

    Args:
        coords: (N, 2) target (x, y); NaN entries are skipped
        planes: (N,) target plane indices in [0, num_planes)
        weights: (N,) splat weights
        payload: (N, C) payloads

    Returns:
        SplatResult with payload (Z, H, W, C) normalised where the weight
        exceeds SPLAT_EPSILON and zero elsewhere, and weight (Z, H, W).
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64).reshape(-1, 2)
    planes = np.ascontiguousarray(planes, dtype=np.int64).reshape(-1)
    weights = np.ascontiguousarray(weights, dtype=np.float64).reshape(-1)
    payload = np.ascontiguousarray(payload, dtype=np.float64)
    if payload.ndim == 1:
        payload = payload[:, None]
    n = coords.shape[0]
    if planes.shape[0] != n or weights.shape[0] != n or payload.shape[0] != n:
        raise DimensionError("coords, planes, weights and payload must have the same length")
    if n and (planes.min() < 0 or planes.max() >= num_planes):
        raise DimensionError(f"Plane indices must lie in [0, {num_planes})")

    out_payload, out_weight = empty_accumulators(num_planes, height, width, payload.shape[1])
    if n:
        splat_bilinear(coords, planes, weights, payload, out_payload, out_weight)

    valid = out_weight > SPLAT_EPSILON
    safe = np.where(valid, out_weight, 1.0)
    out_payload = np.where(valid[..., None], out_payload / safe[..., None], 0.0)
    return SplatResult(out_payload, out_weight)


def splat_forward(image: np.ndarray, target_coords: np.ndarray,
                  weights: Optional[np.ndarray] = None) -> SplatResult:
    """
    Forward-splat an image onto a grid of the same size.

    Args:
        image: (H, W) or (H, W, C) source values
        target_coords: (H, W, 2) target (x, y) per source pixel; NaN drops it
        weights: optional (H, W) per-pixel weights, default ones

    Returns:
        SplatResult(payload (H, W[, C]), weight (H, W)).
    """
    image = np.asarray(image, dtype=np.float64)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[..., None]
    height, width, channels = image.shape
    target_coords = np.asarray(target_coords, dtype=np.float64)
    if target_coords.shape != (height, width, 2):
        raise DimensionError(f"target_coords {target_coords.shape} must be {(height, width, 2)}")
    if weights is None:
        weights = np.ones((height, width))
    elif np.shape(weights) != (height, width):
        raise DimensionError(f"weights {np.shape(weights)} must be {(height, width)}")

    result = splat_to_planes(target_coords.reshape(-1, 2), np.zeros(height * width, dtype=np.int64),
                             np.asarray(weights).reshape(-1), image.reshape(-1, channels),
                             1, height, width)
    payload = result.payload[0]
    if squeeze:
        payload = payload[..., 0]
    return SplatResult(payload, result.weight[0])


def sample_bilinear(stack: np.ndarray, planes: np.ndarray, coords: np.ndarray,
                    fill: float = 0.0, clamp: bool = False) -> np.ndarray:
    """
    Backward bilinear gather from a (Z, H, W, C) stack.

    Args:
        stack: (Z, H, W, C) values
        planes: (...) integer plane index per query, already in range
        coords: (..., 2) query (x, y)
        fill: value read by taps outside the image (ignored when clamp=True)
        clamp: clamp taps to the border instead of reading `fill`

    Returns:
        (..., C) interpolated values. Integer queries return stored values exactly.
    """
    stack = np.asarray(stack, dtype=np.float64)
    num_planes, height, width, channels = stack.shape
    coords = np.asarray(coords, dtype=np.float64)
    planes = np.asarray(planes, dtype=np.int64)
    if coords.shape[:-1] != planes.shape or coords.shape[-1] != 2:
        raise DimensionError(f"coords {coords.shape} and planes {planes.shape} do not agree")

    x, y = coords[..., 0], coords[..., 1]
    finite = np.isfinite(x) & np.isfinite(y)
    x = np.where(finite, x, -10.0)
    y = np.where(finite, y, -10.0)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    out = np.zeros(planes.shape + (channels,))
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xx = x0 + dx
            yy = y0 + dy
            tap = (wx * wy)[..., None]
            if clamp:
                values = stack[planes, np.clip(yy, 0, height - 1), np.clip(xx, 0, width - 1)]
            else:
                inside = (xx >= 0) & (xx < width) & (yy >= 0) & (yy < height)
                values = stack[planes, np.clip(yy, 0, height - 1), np.clip(xx, 0, width - 1)]
                values = np.where(inside[..., None], values, fill)
            out += np.where(tap > 0, tap * values, 0.0)
    if not clamp:
        out = np.where(finite[..., None], out, fill)
    return out
