"""
Layered Motion Engine - Flow Network Tests
==========================================

PURPOSE: Validate the flow network forward pass and the weight-file format

The network is exercised on 32x32 two-plane MPIs so the six-level pyramid
reaches a single voxel without taking long.
"""

import numpy as np
import pytest

from src.common.errors import ConfigurationError, DomainError, InputError
from src.flow.field import reduce_flow_to_real
from src.flow.network import FlowNetwork, estimate_flow_network
from src.flow.weights import (WEIGHT_MAGIC, FlowNetworkWeights, cost_volume_channels,
                              flow_architecture, infer_flow_window, read_weight_file,
                              write_weight_file)
from src.infill.network import InfillNetworkWeights
from src.mpi.representation import MultiPlaneImage, build_mpi, plane_depth_table

pytestmark = pytest.mark.flow

SIZE = 32


@pytest.fixture
def small_pair(rng):
    """Two-plane MPIs of a textured frame and the same frame shifted by 2 px."""
    rgb = rng.uniform(0.0, 1.0, (SIZE, SIZE, 3))
    depth = np.full((SIZE, SIZE), 8.0)
    depth[8:24, 8:24] = 2.0
    m_ref = build_mpi(rgb, depth, 2, depth_range=(2.0, 8.0))
    m_src = build_mpi(np.roll(rgb, 2, axis=1), np.roll(depth, 2, axis=1), 2,
                      plane_depths=m_ref.plane_depths)
    return m_ref, m_src


def dense_mpi(rng):
    """Two planes with alpha one everywhere."""
    shape = (2, SIZE, SIZE)
    return MultiPlaneImage(rng.uniform(0.0, 1.0, shape + (3,)), np.ones(shape) * [[[2.0]], [[8.0]]],
                           np.ones(shape), plane_depth_table(2.0, 8.0, 2))


# =============================================================================
# ARCHITECTURE AND WEIGHTS
# =============================================================================

class TestArchitecture:
    """Test the layer table."""

    def test_cost_volume_width(self):
        assert cost_volume_channels(4, 1) == 243
        assert cost_volume_channels(0, 0) == 1

    def test_decoder_output_carries_window(self):
        specs = {s.name: s for s in flow_architecture(2, 3)}
        assert specs["decoder.6"].out_channels == 2 + 5
        assert specs["decoder.1"].in_channels == cost_volume_channels(3, 2) + 32 + 2 + 5

    def test_pyramid_strides(self):
        specs = {s.name: s for s in flow_architecture(1, 4)}
        assert specs["feature.1a"].stride == (2, 2, 1)
        assert specs["feature.1b"].stride == (1, 1, 1)
        assert specs["feature.6a"].out_channels == 192


class TestFlowNetworkWeights:
    """Test initialisation, validation and the .lmw format."""

    def test_initialize_is_deterministic(self):
        a = FlowNetworkWeights.initialize(seed=7, radius_xy=2)
        b = FlowNetworkWeights.initialize(seed=7, radius_xy=2)
        for name in a.tensors:
            np.testing.assert_array_equal(a.tensors[name], b.tensors[name])

    def test_save_load_recovers_window(self, tmp_path):
        weights = FlowNetworkWeights.initialize(seed=3, s_z=2, radius_xy=3)
        path = tmp_path / "flow.lmw"
        weights.save(path)
        loaded = FlowNetworkWeights.load(path)
        assert (loaded.s_z, loaded.radius_xy) == (2, 3)
        for name, tensor in weights.tensors.items():
            np.testing.assert_allclose(loaded.tensors[name], tensor.astype(np.float32))

    def test_file_starts_with_magic(self, tmp_path):
        path = tmp_path / "flow.lmw"
        FlowNetworkWeights.zeros(radius_xy=1).save(path)
        assert path.read_bytes()[:4] == WEIGHT_MAGIC

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.lmw"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(ConfigurationError, match="not a weight file"):
            read_weight_file(path)

    def test_bad_version_rejected(self, tmp_path):
        path = tmp_path / "future.lmw"
        path.write_bytes(WEIGHT_MAGIC + (2).to_bytes(4, 'little') + (0).to_bytes(4, 'little'))
        with pytest.raises(ConfigurationError):
            read_weight_file(path)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "flow.lmw"
        FlowNetworkWeights.zeros(radius_xy=1).save(path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(InputError, match="Truncated"):
            read_weight_file(path)

    def test_wrong_shape_rejected(self):
        tensors = FlowNetworkWeights.zeros(radius_xy=1).tensors
        tensors["feature.1a.kernel"] = np.zeros((16, 3, 5, 5, 5))
        with pytest.raises(ConfigurationError, match="shape"):
            FlowNetworkWeights(tensors, 1, 1)

    def test_missing_tensor_rejected(self):
        tensors = FlowNetworkWeights.zeros(radius_xy=1).tensors
        del tensors["decoder.3.bias"]
        with pytest.raises(ConfigurationError, match="Missing"):
            FlowNetworkWeights(tensors, 1, 1)

    def test_extra_tensor_rejected(self):
        tensors = FlowNetworkWeights.zeros(radius_xy=1).tensors
        tensors["decoder.7.bias"] = np.zeros(3)
        with pytest.raises(ConfigurationError, match="Unexpected"):
            FlowNetworkWeights(tensors, 1, 1)

    def test_infer_window_needs_decoder(self):
        with pytest.raises(ConfigurationError):
            infer_flow_window({})

    def test_round_trip_of_raw_tensors(self, tmp_path):
        path = tmp_path / "raw.lmw"
        write_weight_file(path, {"a.kernel": np.arange(6.0).reshape(2, 3), "a.bias": np.ones(2)})
        tensors = read_weight_file(path)
        assert list(tensors) == ["a.kernel", "a.bias"]
        np.testing.assert_array_equal(tensors["a.kernel"], np.arange(6.0).reshape(2, 3))


# =============================================================================
# FORWARD PASS
# =============================================================================

class TestFlowNetwork:
    """Test forward-pass behaviour that holds without training."""

    def test_rejects_other_weight_types(self):
        with pytest.raises(ConfigurationError):
            FlowNetwork(InfillNetworkWeights.zeros())

    def test_zero_weights_give_zero_xy_and_uniform_depth(self, small_pair):
        m_ref, m_src = small_pair
        flow = estimate_flow_network(m_ref, m_src, FlowNetworkWeights.zeros(s_z=1, radius_xy=2))
        assert flow.shape == m_ref.shape
        np.testing.assert_array_equal(flow.xy, 0.0)
        np.testing.assert_allclose(flow.depth_dist, 1.0 / 3.0, atol=1e-12)
        assert np.all(np.isfinite(reduce_flow_to_real(flow, m_ref.plane_depths)))

    def test_seeded_weights_are_deterministic(self, small_pair):
        m_ref, m_src = small_pair
        weights = FlowNetworkWeights.initialize(seed=11, radius_xy=2)
        a = estimate_flow_network(m_ref, m_src, weights)
        b = estimate_flow_network(m_ref, m_src, weights)
        np.testing.assert_array_equal(a.xy, b.xy)
        np.testing.assert_array_equal(a.depth_dist, b.depth_dist)

    def test_partial_equals_dense_on_full_alpha(self, rng):
        m_ref, m_src = dense_mpi(rng), dense_mpi(rng)
        weights = FlowNetworkWeights.initialize(seed=5, radius_xy=2)
        partial = estimate_flow_network(m_ref, m_src, weights, partial=True)
        dense = estimate_flow_network(m_ref, m_src, weights, partial=False)
        np.testing.assert_allclose(partial.xy, dense.xy, atol=1e-5)
        np.testing.assert_allclose(partial.depth_dist, dense.depth_dist, atol=1e-5)

    def test_mismatched_tables_rejected(self, small_pair):
        m_ref, _ = small_pair
        other = MultiPlaneImage(m_ref.color, m_ref.depth, m_ref.alpha, m_ref.plane_depths * 2)
        with pytest.raises(DomainError):
            estimate_flow_network(m_ref, other, FlowNetworkWeights.zeros(radius_xy=1))
