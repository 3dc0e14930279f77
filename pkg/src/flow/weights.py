"""
Network Weight Files
====================

Named tensors for the flow and infilling networks, plus the shared on-disk
format.

BINARY FILE FORMAT (.lmw):
    Header:
        - magic (4 bytes): b"LMEW"
        - version (uint32 LE): 1
        - count (uint32 LE): number of tensors
    Body (per tensor):
        - name_length (uint16 LE), name (UTF-8)
        - ndim (uint8), dims (ndim x uint32 LE)
        - data (float32 LE, row-major)

Kernels are stored as "<layer>.kernel" (O, C, kh, kw, kz) and biases as
"<layer>.bias" (O,).
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from src.common.errors import ConfigurationError, InputError

WEIGHT_MAGIC = b"LMEW"
WEIGHT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    """One convolution layer of an architecture table."""
    name: str
    in_channels: int
    out_channels: int
    kernel: Tuple[int, int, int]
    stride: Tuple[int, int, int] = (1, 1, 1)
    padding: Tuple[int, int, int] = (1, 1, 1)

    @property
    def kernel_shape(self) -> Tuple[int, ...]:
        return (self.out_channels, self.in_channels) + tuple(self.kernel)


def write_weight_file(path: Union[str, Path], tensors: Dict[str, np.ndarray]):
    """Write named tensors in the .lmw format (insertion order kept)."""
    with open(path, 'wb') as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack('<II', WEIGHT_VERSION, len(tensors)))
        for name, tensor in tensors.items():
            encoded = name.encode('utf-8')
            tensor = np.ascontiguousarray(tensor, dtype='<f4')
            f.write(struct.pack('<H', len(encoded)))
            f.write(encoded)
            f.write(struct.pack('<B', tensor.ndim))
            f.write(struct.pack(f'<{tensor.ndim}I', *tensor.shape))
            f.write(tensor.tobytes())


def _read_exact(f, count: int, what: str) -> bytes:
    raw = f.read(count)
    if len(raw) != count:
        raise InputError(f"Truncated weight file while reading {what}")
    return raw


def read_weight_file(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read a .lmw file into an ordered name -> float64 array mapping."""
    tensors: Dict[str, np.ndarray] = {}
    with open(path, 'rb') as f:
        magic = _read_exact(f, 4, "magic")
        if magic != WEIGHT_MAGIC:
            raise ConfigurationError(f"{path} is not a weight file (magic {magic!r})")
        version, count = struct.unpack('<II', _read_exact(f, 8, "header"))
        if version != WEIGHT_VERSION:
            raise ConfigurationError(f"Unsupported weight file version {version}")
        for _ in range(count):
            (name_length,) = struct.unpack('<H', _read_exact(f, 2, "name length"))
            name = _read_exact(f, name_length, "name").decode('utf-8')
            (ndim,) = struct.unpack('<B', _read_exact(f, 1, "ndim"))
            dims = struct.unpack(f'<{ndim}I', _read_exact(f, 4 * ndim, "dims"))
            size = int(np.prod(dims)) if ndim else 1
            data = np.frombuffer(_read_exact(f, 4 * size, name), dtype='<f4')
            tensors[name] = data.reshape(dims).astype(np.float64)
        if f.read(1):
            raise InputError(f"Trailing bytes in weight file {path}")
    return tensors


class NetworkWeights:
    """
    Named kernels and biases checked against an architecture.

    Subclasses provide `architecture()` returning the ordered LayerSpecs.
    """

    def __init__(self, tensors: Dict[str, np.ndarray]):
        self.tensors = {name: np.asarray(t, dtype=np.float64) for name, t in tensors.items()}
        self.validate()

    def architecture(self) -> List[LayerSpec]:
        raise NotImplementedError

    def validate(self):
        """Raise ConfigurationError unless every layer is present with its table shape."""
        expected = set()
        for spec in self.architecture():
            for suffix, shape in (("kernel", spec.kernel_shape), ("bias", (spec.out_channels,))):
                key = f"{spec.name}.{suffix}"
                expected.add(key)
                if key not in self.tensors:
                    raise ConfigurationError(f"Missing tensor {key}")
                if self.tensors[key].shape != shape:
                    raise ConfigurationError(
                        f"Tensor {key} has shape {self.tensors[key].shape}, expected {shape}")
        extra = set(self.tensors) - expected
        if extra:
            raise ConfigurationError(f"Unexpected tensors: {sorted(extra)}")

    def layer(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        return self.tensors[f"{name}.kernel"], self.tensors[f"{name}.bias"]

    def spec(self, name: str) -> LayerSpec:
        for spec in self.architecture():
            if spec.name == name:
                return spec
        raise KeyError(name)

    @staticmethod
    def he_normal(architecture: List[LayerSpec], seed: int) -> Dict[str, np.ndarray]:
        """He-normal kernels and zero biases from a fixed seed."""
        rng = np.random.default_rng(seed)
        tensors: Dict[str, np.ndarray] = {}
        for spec in architecture:
            fan_in = spec.in_channels * int(np.prod(spec.kernel))
            tensors[f"{spec.name}.kernel"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), spec.kernel_shape)
            tensors[f"{spec.name}.bias"] = np.zeros(spec.out_channels)
        return tensors

    @staticmethod
    def zero_tensors(architecture: List[LayerSpec]) -> Dict[str, np.ndarray]:
        tensors: Dict[str, np.ndarray] = {}
        for spec in architecture:
            tensors[f"{spec.name}.kernel"] = np.zeros(spec.kernel_shape)
            tensors[f"{spec.name}.bias"] = np.zeros(spec.out_channels)
        return tensors

    def save(self, path: Union[str, Path]):
        ordered = {}
        for spec in self.architecture():
            ordered[f"{spec.name}.kernel"] = self.tensors[f"{spec.name}.kernel"]
            ordered[f"{spec.name}.bias"] = self.tensors[f"{spec.name}.bias"]
        write_weight_file(path, ordered)


# Feature pyramid: (level, filters); each level is an "a" layer with stride
# (2, 2, 1) followed by a "b" layer with stride 1
PYRAMID_FILTERS = [(1, 16), (2, 32), (3, 64), (4, 96), (5, 128), (6, 192)]
INPUT_CHANNELS = 3
REDUCED_CHANNELS = 32
DECODED_LEVELS = [6, 5, 4, 3, 2]

# Decoder: (layer id, filters, skip source id or None)
DECODER_LAYERS = [(1, 128, None), (2, 128, None), (3, 96, 1), (4, 64, 2), (5, 32, 3), (6, None, 4)]


def cost_volume_channels(radius_xy: int, s_z: int) -> int:
    return (2 * radius_xy + 1) ** 2 * (2 * s_z + 1)


def flow_architecture(s_z: int, radius_xy: int) -> List[LayerSpec]:
    """Layer specs of the flow network for a depth window and search radius."""
    specs: List[LayerSpec] = []
    channels = INPUT_CHANNELS
    for level, filters in PYRAMID_FILTERS:
        specs.append(LayerSpec(f"feature.{level}a", channels, filters, (3, 3, 3), (2, 2, 1)))
        specs.append(LayerSpec(f"feature.{level}b", filters, filters, (3, 3, 3)))
        channels = filters
    pyramid = dict(PYRAMID_FILTERS)
    for level in sorted(DECODED_LEVELS):
        specs.append(LayerSpec(f"reduce.{level}", pyramid[level], REDUCED_CHANNELS,
                               (1, 1, 1), padding=(0, 0, 0)))

    window = 2 * s_z + 1
    outputs: Dict[int, int] = {}
    in_channels = cost_volume_channels(radius_xy, s_z) + REDUCED_CHANNELS + 2 + window
    for layer_id, filters, skip in DECODER_LAYERS:
        if skip is not None:
            in_channels = outputs[layer_id - 1] + outputs[skip]
        out = 2 + window if filters is None else filters
        specs.append(LayerSpec(f"decoder.{layer_id}", in_channels, out, (3, 3, 3)))
        outputs[layer_id] = out
        in_channels = out
    return specs


class FlowNetworkWeights(NetworkWeights):
    """Weights of the partial-convolution flow network."""

    def __init__(self, tensors: Dict[str, np.ndarray], s_z: int = 1, radius_xy: int = 4):
        self.s_z = s_z
        self.radius_xy = radius_xy
        super().__init__(tensors)

    def architecture(self) -> List[LayerSpec]:
        return flow_architecture(self.s_z, self.radius_xy)

    @classmethod
    def initialize(cls, seed: int = 0, s_z: int = 1, radius_xy: int = 4) -> 'FlowNetworkWeights':
        """Fixed-seed He-normal initialisation."""
        return cls(cls.he_normal(flow_architecture(s_z, radius_xy), seed), s_z, radius_xy)

    @classmethod
    def zeros(cls, s_z: int = 1, radius_xy: int = 4) -> 'FlowNetworkWeights':
        return cls(cls.zero_tensors(flow_architecture(s_z, radius_xy)), s_z, radius_xy)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'FlowNetworkWeights':
        """Load a weight file, recovering s_z and the search radius from layer shapes."""
        tensors = read_weight_file(path)
        s_z, radius_xy = infer_flow_window(tensors)
        return cls(tensors, s_z, radius_xy)


def infer_flow_window(tensors: Dict[str, np.ndarray]) -> Tuple[int, int]:
    """(s_z, radius_xy) implied by the decoder input and output widths."""
    try:
        out_channels = tensors["decoder.6.kernel"].shape[0]
        in_channels = tensors["decoder.1.kernel"].shape[1]
    except KeyError as e:
        raise ConfigurationError(f"Weight file lacks decoder tensor {e}")
    window = out_channels - 2
    if window < 1 or window % 2 == 0:
        raise ConfigurationError(f"Decoder output width {out_channels} is not 2 + (2 s_z + 1)")
    s_z = (window - 1) // 2
    planar = (in_channels - REDUCED_CHANNELS - 2 - window) / window
    side = int(round(np.sqrt(planar))) if planar > 0 else 0
    if side * side != planar or side % 2 == 0:
        raise ConfigurationError(f"Decoder input width {in_channels} matches no search radius")
    return s_z, (side - 1) // 2
