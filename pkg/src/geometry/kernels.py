"""
Numba kernels for scatter operations.

Both kernels write into caller-owned buffers and skip non-finite input so the
callers can pass invalid reprojections straight through.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def splat_bilinear(coords, planes, weights, payload, out_payload, out_weight):
    """
    Scatter weighted payloads onto the four integer neighbours of each point.

    Args:
        coords: (N, 2) float64 target (x, y)
        planes: (N,) int64 target plane index
        weights: (N,) float64 per-point weight (alpha)
        payload: (N, C) float64 per-point payload
        out_payload: (Z, H, W, C) float64 accumulator, weighted sum
        out_weight: (Z, H, W) float64 accumulator, summed weight
    """
    n = coords.shape[0]
    height = out_weight.shape[1]
    width = out_weight.shape[2]
    channels = payload.shape[1]
    for i in range(n):
        x = coords[i, 0]
        y = coords[i, 1]
        w = weights[i]
        if not (math.isfinite(x) and math.isfinite(y)) or w == 0.0:
            continue
        if x < -2.0 or y < -2.0 or x > width + 1.0 or y > height + 1.0:
            continue
        x0 = math.floor(x)
        y0 = math.floor(y)
        fx = x - x0
        fy = y - y0
        z = planes[i]
        for dy in range(2):
            wy = fy if dy == 1 else 1.0 - fy
            if wy == 0.0:
                continue
            yy = int(y0) + dy
            if yy < 0 or yy >= height:
                continue
            for dx in range(2):
                wx = fx if dx == 1 else 1.0 - fx
                if wx == 0.0:
                    continue
                xx = int(x0) + dx
                if xx < 0 or xx >= width:
                    continue
                tap = w * wx * wy
                out_weight[z, yy, xx] += tap
                for c in range(channels):
                    out_payload[z, yy, xx, c] += tap * payload[i, c]


@njit(cache=True)
def zbuffer_render(coords, depths, payload, zbuffer, out_payload):
    """
    Nearest-pixel z-buffered scatter: the smallest depth wins each target pixel.

    Args:
        coords: (N, 2) float64 target (x, y), rounded to the nearest pixel
        depths: (N,) float64 target depth
        payload: (N, C) float64 values carried by each point
        zbuffer: (H, W) float64, initialised to +inf by the caller
        out_payload: (H, W, C) float64 output
    """
    height = zbuffer.shape[0]
    width = zbuffer.shape[1]
    channels = payload.shape[1]
    for i in range(coords.shape[0]):
        x = coords[i, 0]
        y = coords[i, 1]
        d = depths[i]
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(d)) or d <= 0.0:
            continue
        xx = int(math.floor(x + 0.5))
        yy = int(math.floor(y + 0.5))
        if xx < 0 or xx >= width or yy < 0 or yy >= height:
            continue
        if d < zbuffer[yy, xx]:
            zbuffer[yy, xx] = d
            for c in range(channels):
                out_payload[yy, xx, c] = payload[i, c]


def empty_accumulators(num_planes: int, height: int, width: int, channels: int):
    """Zeroed (payload, weight) buffers for splat_bilinear."""
    return (np.zeros((num_planes, height, width, channels), dtype=np.float64),
            np.zeros((num_planes, height, width), dtype=np.float64))
