"""
Raw Array Files
===============

Struct-packed binary formats used for depth maps and debug dumps.

BINARY FILE FORMAT (raw dump):
    Header:
        - N int32 little-endian dimensions (N fixed by the file kind)
    Body:
        - float32 little-endian values, row-major

    Depth maps (.dpt):  header {H, W}
    MPI dumps:          header {Z, H, W}, body color (Z,H,W,3), depth, alpha
    Flow dumps:         header {Z, H, W, C}

PFM depth maps (single channel "Pf") are also read and written.
"""

import struct
from pathlib import Path
from typing import BinaryIO, Tuple, Union

import numpy as np

from src.common.errors import InputError

PathLike = Union[str, Path]


def write_header(f: BinaryIO, dims: Tuple[int, ...]):
    """Write int32 little-endian dimensions."""
    f.write(struct.pack(f'<{len(dims)}i', *dims))


def read_header(f: BinaryIO, ndim: int) -> Tuple[int, ...]:
    """Read `ndim` int32 little-endian dimensions."""
    raw = f.read(4 * ndim)
    if len(raw) != 4 * ndim:
        raise InputError(f"Truncated header: expected {4 * ndim} bytes, got {len(raw)}")
    dims = struct.unpack(f'<{ndim}i', raw)
    if any(d <= 0 for d in dims):
        raise InputError(f"Invalid header dimensions: {dims}")
    return dims


def write_floats(f: BinaryIO, array: np.ndarray):
    """Write an array as float32 little-endian, row-major."""
    f.write(np.ascontiguousarray(array, dtype='<f4').tobytes())


def read_floats(f: BinaryIO, shape: Tuple[int, ...]) -> np.ndarray:
    """Read float32 little-endian values into `shape` (returned as float64)."""
    count = int(np.prod(shape))
    raw = f.read(4 * count)
    if len(raw) != 4 * count:
        raise InputError(f"Truncated body: expected {4 * count} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype='<f4').reshape(shape).astype(np.float64)


def write_raw_array(path: PathLike, array: np.ndarray):
    """Write an array with its full shape as header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        write_header(f, tuple(int(d) for d in array.shape))
        write_floats(f, array)


def read_raw_array(path: PathLike, ndim: int) -> np.ndarray:
    """Read an array written by write_raw_array with `ndim` dimensions."""
    with open(path, 'rb') as f:
        dims = read_header(f, ndim)
        data = read_floats(f, dims)
        if f.read(1):
            raise InputError(f"Trailing bytes in {path}")
    return data


def write_pfm(path: PathLike, depth: np.ndarray):
    """Write a single-channel PFM (little-endian, bottom row first)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = depth.shape
    with open(path, 'wb') as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode('ascii'))
        f.write(b"-1.0\n")
        write_floats(f, np.flipud(depth))


def read_pfm(path: PathLike) -> np.ndarray:
    """Read a single-channel PFM; three-channel files keep the first channel."""
    with open(path, 'rb') as f:
        kind = f.readline().strip()
        if kind not in (b"Pf", b"PF"):
            raise InputError(f"Not a PFM file: {path}")
        channels = 3 if kind == b"PF" else 1
        try:
            w, h = (int(v) for v in f.readline().split())
            scale = float(f.readline().strip())
        except ValueError as e:
            raise InputError(f"Malformed PFM header in {path}: {e}")
        dtype = '<f4' if scale < 0 else '>f4'
        count = w * h * channels
        raw = f.read(4 * count)
        if len(raw) != 4 * count:
            raise InputError(f"Truncated PFM body in {path}")
    data = np.frombuffer(raw, dtype=dtype).reshape((h, w, channels))[:, :, 0]
    return np.flipud(data).astype(np.float64)
