"""
Layered Motion Engine - MPI Tests
=================================

PURPOSE: Validate multi-plane image construction, compositing and warping

Tests ensure that:
1. Plane tables are uniform in inverse depth, nearest plane first
2. build_mpi followed by alpha_composite reproduces the input exactly
3. warp_mpi matches closed-form shifts and the z-buffer renderer's holes
"""

import numpy as np
import pytest

from src.common.errors import DimensionError, DomainError
from src.flow.field import Flow3D
from src.geometry.camera import CameraModel
from src.metrics.quality import crop_eval_region, psnr
from src.mpi.representation import (MultiPlaneImage, alpha_composite, assign_planes, build_mpi,
                                    composite_depth, empty_like, front_plane_index,
                                    load_mpi_dump, plane_depth_table, save_mpi_dump,
                                    visibility_mask)
from src.mpi.warping import sample_mpi, warp_mpi
from src.synthetic.oracle import oracle_pose_warp
from src.synthetic.scene import Layer, SyntheticScene, render_sequence

pytestmark = pytest.mark.mpi


def single_pixel_mpi(alphas, colors):
    """1x1 MPI with the given per-plane alphas and colours."""
    num_planes = len(alphas)
    alpha = np.array(alphas, dtype=float).reshape(num_planes, 1, 1)
    color = np.array(colors, dtype=float).reshape(num_planes, 1, 1, 3)
    depth = np.where(alpha > 0, np.arange(1, num_planes + 1).reshape(num_planes, 1, 1), 0.0)
    return MultiPlaneImage(color, depth, alpha, np.arange(1.0, num_planes + 1))


# =============================================================================
# PLANE TABLES
# =============================================================================

class TestPlaneTable:
    """Test inverse-depth plane sampling and plane assignment."""

    def test_two_depth_table(self):
        planes = plane_depth_table(1.0, 10.0, 4)
        np.testing.assert_allclose(planes, [1.0, 10 / 7, 2.5, 10.0], rtol=1e-12)

    def test_inverse_depths_are_arithmetic(self):
        planes = plane_depth_table(0.7, 55.0, 8)
        steps = np.diff(1.0 / planes)
        np.testing.assert_allclose(steps, steps[0], atol=1e-9)
        assert np.all(np.diff(planes) > 0)

    def test_assignment_nearest_first(self):
        planes = plane_depth_table(1.0, 10.0, 4)
        assert assign_planes(np.array([1.0, 10.0]), planes).tolist() == [0, 3]
        assert assign_planes(np.array([2.0]), planes).tolist() == [2]

    def test_tie_goes_to_nearer_plane(self):
        # 1/1.6 lies exactly between 1/1 and 1/4
        assert assign_planes(np.array([1.6]), np.array([1.0, 4.0])).tolist() == [0]

    def test_outside_table_lands_on_boundary(self):
        planes = np.array([2.0, 4.0])
        assert assign_planes(np.array([0.5, 100.0]), planes).tolist() == [0, 1]

    def test_invalid_ranges_rejected(self):
        with pytest.raises(DomainError):
            plane_depth_table(1.0, 10.0, 1)
        with pytest.raises(DomainError):
            plane_depth_table(5.0, 5.0, 4)
        with pytest.raises(DomainError):
            plane_depth_table(0.0, 5.0, 4)


# =============================================================================
# BUILD AND COMPOSITE
# =============================================================================

class TestBuildMpi:
    """Test one-hot MPI construction."""

    def test_alpha_is_one_hot(self, two_depth_mpi):
        np.testing.assert_array_equal(two_depth_mpi.alpha.sum(axis=0), 1.0)
        assert set(np.unique(two_depth_mpi.alpha)) == {0.0, 1.0}

    def test_two_depth_assignment(self, two_depth_mpi):
        assert two_depth_mpi.alpha[2, 20, 30] == 1.0
        assert two_depth_mpi.alpha[3, 0, 0] == 1.0
        assert two_depth_mpi.depth[2, 20, 30] == 2.0
        assert two_depth_mpi.depth[3, 0, 0] == 10.0

    def test_depth_channel_positive_where_occupied(self, two_depth_mpi):
        occupied = two_depth_mpi.occupied
        assert np.all(two_depth_mpi.depth[occupied] > 0)
        assert np.all(two_depth_mpi.depth[~occupied] == 0)

    def test_constant_depth_single_plane(self, texture):
        mpi = build_mpi(texture, np.full(texture.shape[:2], 5.0), 4)
        occupied_planes = np.flatnonzero(mpi.alpha.sum(axis=(1, 2)))
        assert len(occupied_planes) == 1
        rgb, holes = alpha_composite(mpi)
        np.testing.assert_array_equal(rgb, texture)
        assert not holes.any()

    def test_composite_round_trip_is_exact(self, two_depth_frame, two_depth_mpi):
        rgb, holes = alpha_composite(two_depth_mpi)
        np.testing.assert_array_equal(rgb, two_depth_frame[0])
        assert not holes.any()

    def test_explicit_plane_table_shared(self, two_depth_frame, two_depth_mpi):
        rgb, depth = two_depth_frame
        other = build_mpi(rgb, depth * 1.5, 4, plane_depths=two_depth_mpi.plane_depths)
        assert other.shares_planes(two_depth_mpi)

    def test_non_positive_depth_rejected(self, texture):
        depth = np.ones(texture.shape[:2])
        depth[0, 0] = 0.0
        with pytest.raises(DomainError):
            build_mpi(texture, depth, 4)

    def test_range_must_cover_depths(self, two_depth_frame):
        rgb, depth = two_depth_frame
        with pytest.raises(DomainError, match="does not cover"):
            build_mpi(rgb, depth, 4, depth_range=(3.0, 10.0))

    def test_shape_mismatch_rejected(self, texture):
        with pytest.raises(DimensionError):
            build_mpi(texture, np.ones((3, 3)), 4)


class TestComposite:
    """Test the over operator and visibility."""

    def test_front_plane_occludes(self):
        mpi = single_pixel_mpi([1, 0, 1], [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
        rgb, holes = alpha_composite(mpi)
        assert rgb[0, 0].tolist() == [1.0, 0.0, 0.0]
        assert not holes[0, 0]

    def test_empty_pixel_is_hole(self):
        mpi = single_pixel_mpi([0, 0, 0], np.zeros((3, 3)))
        rgb, holes = alpha_composite(mpi)
        assert rgb[0, 0].tolist() == [0.0, 0.0, 0.0]
        assert holes[0, 0]

    def test_visibility_product(self):
        mpi = single_pixel_mpi([0.5, 1.0, 0.0, 0.0], np.zeros((4, 3)))
        np.testing.assert_allclose(visibility_mask(mpi)[:, 0, 0], [1.0, 0.5, 0.0, 0.0])

    def test_visibility_of_one_hot(self, two_depth_mpi):
        visibility = visibility_mask(two_depth_mpi)
        assert visibility[:, 20, 30].tolist() == [1.0, 1.0, 1.0, 0.0]
        assert visibility[:, 0, 0].tolist() == [1.0, 1.0, 1.0, 1.0]

    def test_empty_mpi_fully_visible(self, two_depth_mpi):
        np.testing.assert_array_equal(visibility_mask(empty_like(two_depth_mpi)), 1.0)

    def test_visibility_non_increasing(self, two_depth_mpi):
        assert np.all(np.diff(visibility_mask(two_depth_mpi), axis=0) <= 0)

    def test_composite_depth_and_front_plane(self, two_depth_frame, two_depth_mpi):
        np.testing.assert_array_equal(composite_depth(two_depth_mpi), two_depth_frame[1])
        front = front_plane_index(two_depth_mpi)
        assert front[20, 30] == 2 and front[0, 0] == 3
        assert np.all(front_plane_index(empty_like(two_depth_mpi)) == -1)

    def test_dump_round_trip(self, two_depth_mpi, tmp_path):
        path = tmp_path / 'scene.mpi'
        save_mpi_dump(path, two_depth_mpi)
        loaded = load_mpi_dump(path)
        np.testing.assert_allclose(loaded.color, two_depth_mpi.color, atol=1e-7)
        np.testing.assert_array_equal(loaded.alpha, two_depth_mpi.alpha)
        np.testing.assert_allclose(loaded.plane_depths, two_depth_mpi.plane_depths, rtol=1e-6)


# =============================================================================
# WARPING
# =============================================================================

class TestWarpMpi:
    """Test forward warping of whole MPIs."""

    def test_identity_warp_preserves_channels(self, two_depth_mpi, make_camera):
        camera = make_camera()
        warped = warp_mpi(two_depth_mpi, camera, camera)
        np.testing.assert_allclose(warped.color, two_depth_mpi.color, atol=1e-6)
        np.testing.assert_allclose(warped.depth, two_depth_mpi.depth, atol=1e-6)
        np.testing.assert_allclose(warped.alpha, two_depth_mpi.alpha, atol=1e-6)

    def test_translation_shifts_fronto_parallel_plane(self, texture, make_camera):
        depth = np.full(texture.shape[:2], 10.0)
        mpi = build_mpi(texture, depth, 4, depth_range=(1.0, 10.0))
        warped = warp_mpi(mpi, make_camera(), make_camera(tx=0.2))
        rgb, holes = alpha_composite(warped)
        np.testing.assert_allclose(rgb[:, :-2], texture[:, 2:], atol=1e-4)
        assert holes[:, -2:].all()
        assert not holes[:, :-2].any()

    def test_disocclusions_match_zbuffer(self, two_depth_frame, two_depth_mpi, make_camera):
        rgb, depth = two_depth_frame
        src, dst = make_camera(), make_camera(tx=0.2)
        _, holes = alpha_composite(warp_mpi(two_depth_mpi, src, dst))
        oracle = oracle_pose_warp(rgb, depth, src, dst)
        np.testing.assert_array_equal(holes, oracle.holes)
        # the background strip uncovered next to the square
        assert holes[20, 30:38].all()

    def test_warped_colours_match_zbuffer(self, two_depth_frame, two_depth_mpi, make_camera):
        rgb, depth = two_depth_frame
        src, dst = make_camera(), make_camera(tx=0.2)
        warped, holes = alpha_composite(warp_mpi(two_depth_mpi, src, dst))
        oracle = oracle_pose_warp(rgb, depth, src, dst)
        np.testing.assert_allclose(warped[~holes], oracle.frame[~holes], atol=1e-4)

    def test_same_view_integer_flow(self, two_depth_mpi, make_camera):
        camera = make_camera()
        flow = np.zeros(two_depth_mpi.shape + (3,))
        flow[..., 0] = 3.0
        warped = warp_mpi(two_depth_mpi, camera, camera, flow)
        np.testing.assert_array_equal(warped.color[:, :, 3:], two_depth_mpi.color[:, :, :-3])
        assert not warped.occupied[:, :, :3].any()

    def test_depth_flow_moves_plane(self, two_depth_mpi, make_camera):
        camera = make_camera()
        planes = two_depth_mpi.plane_depths
        flow = Flow3D.from_offsets(np.zeros(two_depth_mpi.shape + (2,)),
                                   np.zeros(two_depth_mpi.shape, dtype=int), 1)
        flow.depth_dist[3] = [1.0, 0.0, 0.0]
        warped = warp_mpi(two_depth_mpi, camera, camera, flow)
        # background at exactly d(3) moves to exactly d(2)
        assert warped.alpha[2, 0, 0] == pytest.approx(1.0)
        assert warped.depth[2, 0, 0] == pytest.approx(planes[2])
        assert warped.alpha[3].sum() == 0.0

    def test_plane_table_mismatch_rejected(self, two_depth_mpi, make_camera):
        camera = make_camera()
        with pytest.raises(DimensionError):
            warp_mpi(two_depth_mpi, camera, camera, target_plane_depths=np.array([1.0, 2.0]))

    def test_flow_shape_mismatch_rejected(self, two_depth_mpi, make_camera):
        camera = make_camera()
        with pytest.raises(DimensionError):
            warp_mpi(two_depth_mpi, camera, camera, np.zeros((1, 2, 2, 3)))


class TestSampleMpi:
    """Test backward sampling under a flow."""

    def test_zero_flow_is_identity(self, two_depth_mpi):
        flow = Flow3D.zeros(two_depth_mpi.shape, 1)
        sampled = sample_mpi(two_depth_mpi, flow.xy, flow.depth_dist)
        np.testing.assert_array_equal(sampled.color, two_depth_mpi.color)
        np.testing.assert_array_equal(sampled.alpha, two_depth_mpi.alpha)

    def test_integer_shift_reads_neighbour(self, two_depth_mpi):
        flow = Flow3D.zeros(two_depth_mpi.shape, 1)
        flow.xy[..., 0] = 2.0
        sampled = sample_mpi(two_depth_mpi, flow.xy, flow.depth_dist)
        np.testing.assert_array_equal(sampled.color[:, :, :-2], two_depth_mpi.color[:, :, 2:])
        assert sampled.alpha[:, :, -2:].sum() == 0.0


def random_static_scene(seed, width=168, height=104):
    """
    Background at 10 m with squares at 2 m and 5 m, seen from two camera
    positions 0.1 m-steps apart, so every plane moves by whole pixels.
    """
    rng = np.random.default_rng(seed)
    layers = [Layer("background", (-80, -80, width + 160, height + 160), 10.0, seed=seed)]
    for i, depth in enumerate((2.0, 5.0)[:rng.integers(1, 3)]):
        size = int(rng.integers(16, 33))
        x = int(rng.integers(50, 110 - size // 2))
        y = int(rng.integers(30, 70 - size // 2))
        layers.append(Layer(f"square{i}", (x, y, size, size), depth, seed=seed + 100 + i))
    motion = (0.1 * int(rng.integers(-3, 4)), 0.1 * int(rng.integers(-2, 3)), 0.0)
    sequence = render_sequence(SyntheticScene(width, height, 2, layers, camera_velocity=motion))
    cameras = [CameraModel(sequence.intrinsics, pose, (width, height)) for pose in sequence.poses]
    return sequence, cameras


@pytest.mark.slow
class TestPoseWarpAgainstOracle:
    """Compare MPI pose warps with the z-buffer render over random camera motions."""

    @pytest.mark.parametrize("seed", range(20))
    def test_random_camera_motion(self, seed):
        sequence, (src, dst) = random_static_scene(seed)
        frame, depth = sequence.frames[0], sequence.depths[0]
        warped, holes = alpha_composite(warp_mpi(build_mpi(frame, depth, 4), src, dst))
        oracle = oracle_pose_warp(frame, depth, src, dst)

        np.testing.assert_array_equal(holes, oracle.holes)
        kept = ~crop_eval_region(holes)
        assert kept.any()
        score = psnr(crop_eval_region(warped)[kept], crop_eval_region(oracle.frame)[kept])
        assert score > 35.0
