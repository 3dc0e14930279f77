"""
Colour-wheel flow images.

Hue encodes direction and saturation encodes magnitude relative to the
largest displacement, on the usual 55-entry wheel
(red-yellow 15, yellow-green 6, green-cyan 4, cyan-blue 11, blue-magenta 13,
magenta-red 6).
"""

from typing import Optional

import numpy as np

from src.common.errors import DimensionError

WHEEL_SEGMENTS = (15, 6, 4, 11, 13, 6)


def color_wheel() -> np.ndarray:
    """(55, 3) wheel colours in [0, 255]."""
    ry, yg, gc, cb, bm, mr = WHEEL_SEGMENTS
    wheel = np.zeros((sum(WHEEL_SEGMENTS), 3))
    col = 0
    wheel[col:col + ry, 0] = 255
    wheel[col:col + ry, 1] = np.floor(255 * np.arange(ry) / ry)
    col += ry
    wheel[col:col + yg, 0] = 255 - np.floor(255 * np.arange(yg) / yg)
    wheel[col:col + yg, 1] = 255
    col += yg
    wheel[col:col + gc, 1] = 255
    wheel[col:col + gc, 2] = np.floor(255 * np.arange(gc) / gc)
    col += gc
    wheel[col:col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col:col + cb, 2] = 255
    col += cb
    wheel[col:col + bm, 2] = 255
    wheel[col:col + bm, 0] = np.floor(255 * np.arange(bm) / bm)
    col += bm
    wheel[col:col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col:col + mr, 0] = 255
    return wheel


def flow_to_color(xy: np.ndarray, max_magnitude: Optional[float] = None) -> np.ndarray:
    """
    Render an (H, W, 2) flow as an (H, W, 3) uint8 image.

    Zero flow is white. Non-finite vectors render black.
    """
    xy = np.asarray(xy, dtype=np.float64)
    if xy.ndim != 3 or xy.shape[-1] != 2:
        raise DimensionError(f"Flow must be (H, W, 2), got {xy.shape}")
    finite = np.all(np.isfinite(xy), axis=-1)
    u = np.where(finite, xy[..., 0], 0.0)
    v = np.where(finite, xy[..., 1], 0.0)
    magnitude = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = magnitude.max()
    if max_magnitude > 0:
        u, v, magnitude = u / max_magnitude, v / max_magnitude, magnitude / max_magnitude

    wheel = color_wheel()
    ncols = wheel.shape[0]
    angle = np.arctan2(-v, -u) / np.pi
    position = (angle + 1) / 2 * (ncols - 1)
    k0 = np.floor(position).astype(np.int64)
    k1 = (k0 + 1) % ncols
    f = position - k0

    image = np.zeros(xy.shape[:2] + (3,), dtype=np.uint8)
    for channel in range(3):
        col = ((1 - f) * wheel[k0, channel] + f * wheel[k1, channel]) / 255.0
        inside = magnitude <= 1
        col = np.where(inside, 1 - magnitude * (1 - col), col * 0.75)
        image[..., channel] = np.floor(255 * col * finite).astype(np.uint8)
    return image
