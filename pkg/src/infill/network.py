"""
Infilling Network
=================

3D U-Net that predicts per-voxel infilling vectors from the RGBA planes of a
warped MPI.

ARCHITECTURE (kernel, filters, stride, skip):
    1  7x7x7  32   1          ReLU
    2  5x5x5  64   (2, 2, 1)  ReLU
    3  3x3x3  128  (2, 2, 1)  ReLU
    4  3x3x3  128  (2, 2, 1)  ReLU
    5  3x3x3  128  (2, 2, 1)  ReLU
    6  3x3x3  128  up x2, +4  ReLU
    7  3x3x3  64   up x2, +3  ReLU
    8  3x3x3  32   up x2, +2  ReLU
    9  3x3x3  2    up x2, +1  linear

Upsampling is nearest-neighbour in x-y to the skip's size; depth is never
resampled. Weights use the shared .lmw format with layer names infill.1 to
infill.9.
"""

from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from src.common.errors import ConfigurationError
from src.flow.layers import conv3d, mpi_to_volume, volume_to_mpi
from src.flow.weights import LayerSpec, NetworkWeights, read_weight_file
from src.infill.filling import InfillVectors, detect_disocclusions
from src.mpi.representation import MultiPlaneImage

INPUT_CHANNELS = 4

INFILL_ARCHITECTURE: List[LayerSpec] = [
    LayerSpec("infill.1", INPUT_CHANNELS, 32, (7, 7, 7), (1, 1, 1), (3, 3, 3)),
    LayerSpec("infill.2", 32, 64, (5, 5, 5), (2, 2, 1), (2, 2, 2)),
    LayerSpec("infill.3", 64, 128, (3, 3, 3), (2, 2, 1)),
    LayerSpec("infill.4", 128, 128, (3, 3, 3), (2, 2, 1)),
    LayerSpec("infill.5", 128, 128, (3, 3, 3), (2, 2, 1)),
    LayerSpec("infill.6", 128 + 128, 128, (3, 3, 3)),
    LayerSpec("infill.7", 128 + 128, 64, (3, 3, 3)),
    LayerSpec("infill.8", 64 + 64, 32, (3, 3, 3)),
    LayerSpec("infill.9", 32 + 32, 2, (3, 3, 3)),
]

# decoder layer -> encoder layer whose output is concatenated after upsampling
SKIPS = {6: 4, 7: 3, 8: 2, 9: 1}


def clip_to_image(vectors: np.ndarray) -> np.ndarray:
    """Clamp (Z, H, W, 2) vectors so every copy source lies inside the image."""
    _, height, width, _ = vectors.shape
    ys, xs = np.mgrid[0:height, 0:width]
    out = np.empty_like(vectors)
    out[..., 0] = np.clip(vectors[..., 0], -xs, width - 1 - xs)
    out[..., 1] = np.clip(vectors[..., 1], -ys, height - 1 - ys)
    return out


class InfillNetworkWeights(NetworkWeights):
    """Weights of the infilling U-Net."""

    def architecture(self) -> List[LayerSpec]:
        return INFILL_ARCHITECTURE

    @classmethod
    def initialize(cls, seed: int = 0) -> 'InfillNetworkWeights':
        return cls(cls.he_normal(INFILL_ARCHITECTURE, seed))

    @classmethod
    def zeros(cls) -> 'InfillNetworkWeights':
        return cls(cls.zero_tensors(INFILL_ARCHITECTURE))

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'InfillNetworkWeights':
        return cls(read_weight_file(path))


def upsample_nearest(volume: np.ndarray, height: int, width: int) -> np.ndarray:
    """x2 nearest-neighbour upsampling of a (C, h, w, Z) volume cropped to (height, width)."""
    rows = np.minimum(np.arange(height) // 2, volume.shape[1] - 1)
    cols = np.minimum(np.arange(width) // 2, volume.shape[2] - 1)
    return volume[:, rows][:, :, cols]


class InfillNetwork:
    """Forward pass of the infilling U-Net."""

    def __init__(self, weights: InfillNetworkWeights):
        if not isinstance(weights, InfillNetworkWeights):
            raise ConfigurationError("InfillNetwork needs InfillNetworkWeights")
        weights.validate()
        self.weights = weights

    def _conv(self, layer_id: int, x: np.ndarray) -> np.ndarray:
        spec = self.weights.spec(f"infill.{layer_id}")
        kernel, bias = self.weights.layer(spec.name)
        return conv3d(x, kernel, bias, spec.stride, spec.padding)

    def forward(self, rgba: np.ndarray) -> np.ndarray:
        """(4, H, W, Z) RGBA volume to (2, H, W, Z) vectors."""
        outputs: Dict[int, np.ndarray] = {}
        x = rgba
        for layer_id in range(1, 6):
            x = np.maximum(self._conv(layer_id, x), 0.0)
            outputs[layer_id] = x
        for layer_id in range(6, 10):
            skip = outputs[SKIPS[layer_id]]
            x = np.concatenate([upsample_nearest(x, skip.shape[1], skip.shape[2]), skip], axis=0)
            x = self._conv(layer_id, x)
            if layer_id < 9:
                x = np.maximum(x, 0.0)
        return x

    def predict_vectors(self, mpi: MultiPlaneImage,
                        mask: Optional[np.ndarray] = None) -> InfillVectors:
        """Infilling vectors for the MPI's disoccluded voxels."""
        if mask is None:
            mask = detect_disocclusions(mpi)
        vectors = volume_to_mpi(self.forward(mpi_to_volume(mpi.rgba())))
        return InfillVectors(clip_to_image(vectors), mask)
