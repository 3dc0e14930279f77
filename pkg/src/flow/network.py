"""
Partial-Convolution Flow Network
================================

Forward pass of the pyramid flow estimator on MPI pairs.

PIPELINE:
1. Six-level feature pyramid of 3D partial convolutions (x-y stride 2 per
   level, depth stride 1) on premultiplied colour
2. For levels 6 to 2, coarsest first:
   - upsample the previous flow by 2 (zero at the coarsest level)
   - warp the source features with it
   - masked correlation of reference and warped source features
   - 1x1x1 partial conv of the reference features to 32 channels
   - concatenate cost volume, reduced features and previous flow, run the
     shared decoder, compose its residual with the previous flow
3. Levels 1 and 0 only upsample, so the final flow is estimated at 1/4
   resolution

The decoder's last layer is linear on the two x-y channels and a softmax
over the depth-offset channels.
"""

from typing import Dict, List, Tuple

import numpy as np

from src.common.errors import ConfigurationError, DomainError
from src.flow.field import Flow3D, compose_residual_flow, upsample_flow
from src.flow.layers import (conv3d, leaky_relu, masked_correlation, mpi_to_volume,
                             output_size, partial_conv3, search_offsets, softmax,
                             strided_mask, volume_to_mpi, warp_features)
from src.flow.weights import (DECODED_LEVELS, DECODER_LAYERS, PYRAMID_FILTERS,
                              FlowNetworkWeights)
from src.mpi.representation import MultiPlaneImage

Level = Tuple[np.ndarray, np.ndarray]


class FlowNetwork:
    """
    Flow estimator bound to one set of weights.

    partial=False swaps every partial convolution for a dense one while keeping
    the masks for correlation and warping; with all-ones inputs both variants
    agree.
    """

    def __init__(self, weights: FlowNetworkWeights, partial: bool = True):
        if not isinstance(weights, FlowNetworkWeights):
            raise ConfigurationError("FlowNetwork needs FlowNetworkWeights")
        weights.validate()
        self.weights = weights
        self.partial = partial
        self.s_z = weights.s_z
        self.radius_xy = weights.radius_xy
        self._offsets = search_offsets(self.radius_xy, self.s_z)
        self._offset_index = {tuple(o): i for i, o in enumerate(self._offsets)}

    def _conv(self, name: str, x: np.ndarray, mask: np.ndarray) -> Level:
        spec = self.weights.spec(name)
        kernel, bias = self.weights.layer(name)
        if x.shape[0] != spec.in_channels:
            raise ConfigurationError(
                f"Layer {name} expects {spec.in_channels} channels, got {x.shape[0]}")
        if self.partial:
            return partial_conv3(x, mask, kernel, bias, spec.stride, spec.padding)
        out = conv3d(x, kernel, bias, spec.stride, spec.padding)
        size = output_size(x.shape[1:], spec.kernel, spec.stride, spec.padding)
        return out, strided_mask(mask, spec.kernel, spec.stride, spec.padding, size)

    def features(self, mpi: MultiPlaneImage) -> List[Level]:
        """[(features, mask)] for levels 0 (input) to 6."""
        x = mpi_to_volume(mpi.color * mpi.alpha[..., None])
        mask = (mpi.alpha > 0).astype(np.float64).transpose(1, 2, 0)
        levels = [(x, mask)]
        for level, _ in PYRAMID_FILTERS:
            x, mask = self._conv(f"feature.{level}a", x, mask)
            x = leaky_relu(x)
            x, mask = self._conv(f"feature.{level}b", x, mask)
            x = leaky_relu(x)
            levels.append((x, mask))
        return levels

    def cost_volume(self, h1: np.ndarray, m1: np.ndarray, h2: np.ndarray, m2: np.ndarray) -> np.ndarray:
        """
        (D, H, W, Z) scores in the full search-window layout.

        Levels smaller than the window search a clipped window; the missing
        displacements read zero.
        """
        _, height, width, depth = h1.shape
        radius = min(self.radius_xy, height - 1, width - 1)
        window = min(self.s_z, depth - 1)
        cv = masked_correlation(h1, m1, h2, m2, (radius, window))
        full = np.zeros((len(self._offsets), height, width, depth))
        for i, offset in enumerate(cv.offsets):
            full[self._offset_index[tuple(offset)]] = cv.scores[i]
        return full

    def decode(self, x: np.ndarray, mask: np.ndarray) -> Flow3D:
        """Shared decoder: residual Flow3D from the concatenated level input."""
        outputs: Dict[int, np.ndarray] = {}
        for layer_id, filters, skip in DECODER_LAYERS:
            if skip is not None:
                x = np.concatenate([outputs[layer_id - 1], outputs[skip]], axis=0)
            x, _ = self._conv(f"decoder.{layer_id}", x, mask)
            if filters is not None:
                x = leaky_relu(x)
            outputs[layer_id] = x
        xy = volume_to_mpi(x[:2])
        dist = volume_to_mpi(softmax(x[2:], axis=0))
        return Flow3D(xy, dist, self.s_z)

    def estimate(self, m_ref: MultiPlaneImage, m_src: MultiPlaneImage) -> Flow3D:
        """Flow from m_ref into m_src at full resolution."""
        if not m_ref.shares_planes(m_src):
            raise DomainError("Reference and source MPIs must share a plane table and grid")
        ref_levels = self.features(m_ref)
        src_levels = self.features(m_src)
        num_planes = m_ref.num_planes

        flow = None
        for level in DECODED_LEVELS:
            h_ref, mask_ref = ref_levels[level]
            h_src, mask_src = src_levels[level]
            shape = h_ref.shape[1:3]
            if flow is None:
                flow = Flow3D.zeros((num_planes,) + shape, self.s_z)
            else:
                flow = upsample_flow(flow, shape, 2)

            warped, warped_mask = warp_features(h_src, mask_src, flow)
            cost = self.cost_volume(h_ref, mask_ref, warped, warped_mask)
            reduced, _ = self._conv(f"reduce.{level}", h_ref, mask_ref)
            x = np.concatenate([cost, leaky_relu(reduced),
                                mpi_to_volume(flow.xy), mpi_to_volume(flow.depth_dist)], axis=0)
            flow = compose_residual_flow(flow, self.decode(x, mask_ref))

        for level in reversed(range(min(DECODED_LEVELS))):
            flow = upsample_flow(flow, ref_levels[level][0].shape[1:3], 2)
        return flow


def estimate_flow_network(m_ref: MultiPlaneImage, m_src: MultiPlaneImage,
                          weights: FlowNetworkWeights, partial: bool = True) -> Flow3D:
    """Run the flow network once; see FlowNetwork."""
    return FlowNetwork(weights, partial=partial).estimate(m_ref, m_src)
