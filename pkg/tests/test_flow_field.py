"""
Layered Motion Engine - Flow Field Tests
========================================

PURPOSE: Validate Flow3D, its real-valued reduction, residual composition,
resampling and linear extrapolation
"""

import numpy as np
import pytest

from src.common.errors import DimensionError, DomainError
from src.flow.field import (Flow3D, compose_residual_flow, downsample_flow, extrapolate_flow,
                            load_flow_dump, reduce_flow_to_real, save_flow_dump, upsample_flow)

pytestmark = pytest.mark.flow

SHAPE = (3, 4, 5)


def constant_flow(xy, dist, shape=SHAPE):
    """Flow with the same xy and depth distribution at every voxel."""
    dist = np.asarray(dist, dtype=float)
    s_z = (len(dist) - 1) // 2
    return Flow3D(np.broadcast_to(np.asarray(xy, dtype=float), shape + (2,)).copy(),
                  np.broadcast_to(dist, shape + (len(dist),)).copy(), s_z)


# =============================================================================
# FLOW3D
# =============================================================================

class TestFlow3D:
    """Test Flow3D construction and invariants."""

    def test_zeros_is_one_hot_at_zero(self):
        flow = Flow3D.zeros(SHAPE, 1)
        assert flow.depth_dist.shape == SHAPE + (3,)
        np.testing.assert_array_equal(flow.mode_offset(), 0)
        np.testing.assert_array_equal(flow.expected_offset(), 0.0)

    def test_unnormalised_distribution_rejected(self):
        with pytest.raises(DomainError, match="probability"):
            Flow3D(np.zeros(SHAPE + (2,)), np.full(SHAPE + (3,), 0.5), 1)

    def test_window_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            Flow3D(np.zeros(SHAPE + (2,)), np.ones(SHAPE + (1,)), 1)

    def test_non_finite_xy_rejected(self):
        xy = np.zeros(SHAPE + (2,))
        xy[0, 0, 0, 0] = np.nan
        with pytest.raises(DomainError):
            Flow3D(xy, Flow3D.zeros(SHAPE, 0).depth_dist, 0)

    def test_from_offsets(self):
        offsets = np.zeros(SHAPE, dtype=int)
        offsets[1] = -1
        flow = Flow3D.from_offsets(np.zeros(SHAPE + (2,)), offsets, 1)
        np.testing.assert_array_equal(flow.mode_offset(), offsets)

    def test_from_offsets_outside_window_rejected(self):
        with pytest.raises(DomainError):
            Flow3D.from_offsets(np.zeros(SHAPE + (2,)), np.full(SHAPE, 2), 1)

    def test_expected_offset(self):
        flow = constant_flow((0, 0), [0.25, 0.25, 0.5])
        np.testing.assert_allclose(flow.expected_offset(), 0.25)


# =============================================================================
# REDUCTION TO REAL FLOW
# =============================================================================

class TestReduceFlow:
    """Test the distribution-to-metres reduction."""

    PLANES = np.array([1.0, 2.0, 4.0])

    def test_stationary_depth(self):
        flow = constant_flow((1.5, -2.0), [0, 1, 0])
        real = reduce_flow_to_real(flow, self.PLANES)
        np.testing.assert_array_equal(real[..., :2], flow.xy)
        np.testing.assert_array_equal(real[..., 2], 0.0)

    def test_one_plane_further(self):
        flow = constant_flow((0, 0), [0, 0, 1])
        real = reduce_flow_to_real(flow, self.PLANES)
        assert real[0, 0, 0, 2] == 1.0
        assert real[1, 0, 0, 2] == 2.0

    def test_mixed_distribution(self):
        flow = constant_flow((0, 0), [0.5, 0.5, 0.0])
        real = reduce_flow_to_real(flow, self.PLANES)
        assert real[1, 0, 0, 2] == pytest.approx(-0.5)

    def test_window_clamped_at_boundary(self):
        real = reduce_flow_to_real(constant_flow((0, 0), [1, 0, 0]), self.PLANES)
        assert real[0, 0, 0, 2] == 0.0
        real = reduce_flow_to_real(constant_flow((0, 0), [0, 0, 1]), self.PLANES)
        assert real[2, 0, 0, 2] == 0.0

    def test_reduce_caches(self):
        flow = constant_flow((1, 0), [0, 1, 0])
        real = flow.reduce(self.PLANES)
        assert flow.real_flow is real

    def test_plane_table_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            reduce_flow_to_real(Flow3D.zeros(SHAPE, 1), np.array([1.0, 2.0]))


# =============================================================================
# COMPOSITION AND RESAMPLING
# =============================================================================

class TestComposeResidualFlow:
    """Test coarse-to-fine composition."""

    def test_identity_residual_keeps_prev(self, rng):
        dist = rng.dirichlet(np.ones(3), SHAPE)
        prev = Flow3D(rng.normal(size=SHAPE + (2,)), dist, 1)
        composed = compose_residual_flow(prev, Flow3D.zeros(SHAPE, 1))
        np.testing.assert_array_equal(composed.xy, prev.xy)
        np.testing.assert_allclose(composed.depth_dist, prev.depth_dist, atol=1e-12)

    def test_zero_prev_gives_residual(self, rng):
        dist = rng.dirichlet(np.ones(3), SHAPE)
        residual = Flow3D(np.round(rng.normal(size=SHAPE + (2,))), dist, 1)
        composed = compose_residual_flow(Flow3D.zeros(SHAPE, 1), residual)
        np.testing.assert_array_equal(composed.xy, residual.xy)
        np.testing.assert_allclose(composed.depth_dist, residual.depth_dist, atol=1e-12)

    def test_shifts_add_and_clamp(self):
        plus_one = constant_flow((0, 0), [0, 0, 1])
        composed = compose_residual_flow(plus_one, plus_one)
        np.testing.assert_allclose(composed.depth_dist[1], np.broadcast_to([0, 0, 1], (4, 5, 3)))

        plus_one_wide = constant_flow((0, 0), [0, 0, 0, 1, 0])
        composed = compose_residual_flow(plus_one_wide, plus_one_wide)
        np.testing.assert_allclose(composed.mode_offset()[1], 2)

    def test_matches_distribution_convolution(self, rng):
        p = rng.dirichlet(np.ones(5))
        r = rng.dirichlet(np.ones(5))
        composed = compose_residual_flow(constant_flow((0, 0), p), constant_flow((0, 0), r))
        expected = np.zeros(5)
        for i, first in enumerate(range(-2, 3)):
            for j, second in enumerate(range(-2, 3)):
                expected[np.clip(first + second, -2, 2) + 2] += r[i] * p[j]
        np.testing.assert_allclose(composed.depth_dist[2, 1, 1], expected, atol=1e-12)

    def test_distributions_stay_normalised(self, rng):
        prev = Flow3D(rng.normal(size=SHAPE + (2,)), rng.dirichlet(np.ones(3), SHAPE), 1)
        residual = Flow3D(rng.normal(size=SHAPE + (2,)), rng.dirichlet(np.ones(3), SHAPE), 1)
        for centred in (False, True):
            composed = compose_residual_flow(prev, residual, prior_centred=centred)
            np.testing.assert_allclose(composed.depth_dist.sum(axis=-1), 1.0, atol=1e-5)

    def test_mismatched_flows_rejected(self):
        with pytest.raises(DimensionError):
            compose_residual_flow(Flow3D.zeros(SHAPE, 1), Flow3D.zeros(SHAPE, 2))


class TestResampleFlow:
    """Test x-y up/downsampling."""

    def test_upsample_doubles_displacements(self):
        flow = constant_flow((1.5, -1.0), [0, 1, 0], shape=(2, 3, 4))
        up = upsample_flow(flow, (6, 8))
        assert up.shape == (2, 6, 8)
        np.testing.assert_array_equal(up.xy[..., 0], 3.0)
        np.testing.assert_array_equal(up.xy[..., 1], -2.0)

    def test_upsample_is_nearest_neighbour(self, rng):
        flow = Flow3D(rng.normal(size=(1, 2, 2, 2)), rng.dirichlet(np.ones(3), (1, 2, 2)), 1)
        up = upsample_flow(flow, (4, 4))
        np.testing.assert_array_equal(up.depth_dist[0, 3, 1], flow.depth_dist[0, 1, 0])

    def test_odd_sizes_clamp(self):
        up = upsample_flow(Flow3D.zeros((1, 2, 2), 1), (5, 5))
        assert up.shape == (1, 5, 5)

    def test_downsample_halves(self):
        flow = constant_flow((4.0, 2.0), [0, 1, 0], shape=(1, 4, 4))
        down = downsample_flow(flow, (2, 2))
        np.testing.assert_array_equal(down.xy[..., 0], 2.0)


# =============================================================================
# EXTRAPOLATION
# =============================================================================

class TestExtrapolateFlow:
    """Test the linear motion model."""

    def test_single_frame(self):
        u = np.array([4.0, -2.0, 0.5])
        np.testing.assert_array_equal(extrapolate_flow(u, 2, 1), [-2.0, 1.0, -0.25])

    def test_zero_step_is_zero(self):
        np.testing.assert_array_equal(extrapolate_flow(np.ones((2, 3)), 2, 0), 0.0)

    def test_multi_frame_sequence(self):
        u = np.array([5.0, -10.0, 2.5])
        steps = [extrapolate_flow(u, 5, k) for k in range(1, 5)]
        for k, scaled in enumerate(steps, 1):
            np.testing.assert_allclose(scaled, -k / 5 * u, rtol=1e-15)
        magnitudes = [np.linalg.norm(s) for s in steps]
        np.testing.assert_allclose(np.diff(magnitudes), magnitudes[0], rtol=1e-12)

    def test_linearity(self, rng):
        u = rng.normal(size=(2, 3, 4, 3))
        np.testing.assert_allclose(extrapolate_flow(3.0 * u, 4, 3), 3.0 * extrapolate_flow(u, 4, 3),
                                   rtol=1e-15)

    def test_invalid_gaps_rejected(self):
        with pytest.raises(DomainError):
            extrapolate_flow(np.zeros(3), 0, 0)
        with pytest.raises(DomainError):
            extrapolate_flow(np.zeros(3), 2, 2)

    def test_unreduced_flow_rejected(self):
        with pytest.raises(DomainError, match="reduced"):
            extrapolate_flow(Flow3D.zeros(SHAPE, 1), 2, 1)

    def test_reduced_flow_accepted(self):
        flow = constant_flow((2.0, 0.0), [0, 1, 0])
        flow.reduce(np.array([1.0, 2.0, 4.0]))
        np.testing.assert_array_equal(extrapolate_flow(flow, 2, 1)[..., 0], -1.0)


class TestFlowDump:
    """Test the raw flow dump."""

    def test_dump_round_trip(self, rng, tmp_path):
        flow = Flow3D(rng.normal(size=SHAPE + (2,)), rng.dirichlet(np.ones(3), SHAPE), 1)
        save_flow_dump(tmp_path / 'flow.raw', flow)
        loaded = load_flow_dump(tmp_path / 'flow.raw')
        assert loaded.s_z == 1
        np.testing.assert_allclose(loaded.xy, flow.xy, rtol=1e-6)
        np.testing.assert_allclose(loaded.depth_dist, flow.depth_dist, atol=1e-6)
