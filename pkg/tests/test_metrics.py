"""
Layered Motion Engine - Metrics Tests
=====================================

PURPOSE: Validate PSNR, SSIM, AEPE, the evaluation crop and the CSV / JSON
evaluation reports
"""

import csv
import json

import imageio.v3 as iio
import numpy as np
import pytest

from src.common.errors import DimensionError, DomainError, InputError
from src.metrics.quality import (PSNR_CAP, aepe, composite_flow_to_pixels, crop_eval_region, psnr,
                                 ssim)
from src.metrics.report import EvalReport, FrameScore, evaluate_directories, score_frame

pytestmark = pytest.mark.metrics


def reference_ssim(a, b):
    """Gaussian-window SSIM evaluated pixel by pixel with explicit 11x11 weights."""
    taps = np.arange(-5, 6)
    g = np.exp(-taps ** 2 / (2 * 1.5 ** 2))
    window = np.outer(g, g) / np.outer(g, g).sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    height, width, channels = a.shape
    per_channel = []
    for c in range(channels):
        pa = np.pad(a[..., c], 5, mode='symmetric')
        pb = np.pad(b[..., c], 5, mode='symmetric')
        values = []
        for y in range(5, height - 5):
            for x in range(5, width - 5):
                wa = pa[y:y + 11, x:x + 11]
                wb = pb[y:y + 11, x:x + 11]
                mu_a = np.sum(window * wa)
                mu_b = np.sum(window * wb)
                var_a = np.sum(window * wa * wa) - mu_a ** 2
                var_b = np.sum(window * wb * wb) - mu_b ** 2
                cov = np.sum(window * wa * wb) - mu_a * mu_b
                values.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                              / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
        per_channel.append(np.mean(values))
    return float(np.mean(per_channel))


# =============================================================================
# EVALUATION CROP
# =============================================================================

class TestCropEvalRegion:
    """Test the 40 / 60 pixel evaluation margins."""

    def test_full_hd(self):
        assert crop_eval_region(np.zeros((1080, 1920, 3))).shape == (1000, 1800, 3)

    def test_sintel_size(self):
        assert crop_eval_region(np.zeros((436, 1024))).shape == (356, 904)

    def test_crop_of_crop_doubles_margins(self, rng):
        frame = rng.uniform(size=(300, 400, 3))
        np.testing.assert_array_equal(crop_eval_region(crop_eval_region(frame)),
                                      crop_eval_region(frame, 80, 120))

    def test_keeps_centre(self):
        frame = np.zeros((100, 140))
        frame[40, 60] = 1.0
        assert crop_eval_region(frame)[0, 0] == 1.0

    @pytest.mark.parametrize("shape", [(80, 200), (100, 120)])
    def test_too_small_rejected(self, shape):
        with pytest.raises(DomainError):
            crop_eval_region(np.zeros(shape))


# =============================================================================
# PSNR AND SSIM
# =============================================================================

class TestPsnr:
    """Test PSNR with peak 1.0."""

    def test_identical_frames_capped(self, texture):
        assert psnr(texture, texture) == PSNR_CAP

    def test_constant_offset_is_20_db(self, rng):
        a = rng.uniform(0.0, 0.9, (32, 32, 3))
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(2, 20, 20, 3))
        assert psnr(a, b) == pytest.approx(psnr(b, a))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSsim:
    """Test channel-averaged Gaussian SSIM."""

    def test_identical_frames_give_one(self, texture):
        assert ssim(texture, texture) == pytest.approx(1.0, abs=1e-12)

    def test_matches_reference_formula(self, rng):
        a, b = rng.uniform(size=(2, 24, 24, 3))
        assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-6)

    def test_channel_permutation_invariant(self, rng):
        a, b = rng.uniform(size=(2, 24, 24, 3))
        order = [2, 0, 1]
        assert ssim(a[..., order], b[..., order]) == pytest.approx(ssim(a, b), abs=1e-12)

    def test_grayscale_supported(self, rng):
        a = rng.uniform(size=(16, 16))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_tiny_frame_rejected(self):
        with pytest.raises(DomainError):
            ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


# =============================================================================
# AEPE
# =============================================================================

class TestAepe:
    """Test the x-y endpoint error."""

    def test_identical_flows(self, rng):
        flow = rng.normal(size=(6, 7, 3))
        assert aepe(flow, flow) == 0.0

    def test_three_four_five(self):
        gt = np.zeros((5, 5, 2))
        est = gt + [3.0, 4.0]
        assert aepe(est, gt) == pytest.approx(5.0)

    def test_depth_component_ignored(self):
        gt = np.zeros((3, 3, 3))
        est = gt.copy()
        est[..., 2] = 7.0
        assert aepe(est, gt) == 0.0

    def test_valid_mask_restricts(self):
        gt = np.zeros((2, 2, 2))
        est = gt.copy()
        est[0, 0] = [6.0, 8.0]
        mask = np.array([[True, False], [False, False]])
        assert aepe(est, gt, mask) == pytest.approx(10.0)
        assert aepe(est, gt, ~mask) == 0.0

    def test_empty_mask_is_nan(self):
        assert np.isnan(aepe(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), np.zeros((2, 2), bool)))

    def test_triangle_inequality(self, rng):
        a, b, c = rng.normal(size=(3, 8, 8, 2))
        assert aepe(a, c) <= aepe(a, b) + aepe(b, c) + 1e-9

    def test_mask_shape_checked(self):
        with pytest.raises(DimensionError):
            aepe(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), np.ones((3, 3), bool))


class TestCompositeFlowToPixels:
    """Test reading per-voxel flow at each pixel's front plane."""

    def test_takes_front_plane(self, two_depth_mpi):
        flow = np.zeros(two_depth_mpi.shape + (2,))
        for z in range(two_depth_mpi.num_planes):
            flow[z] = z
        pixels, valid = composite_flow_to_pixels(flow, two_depth_mpi)
        assert valid.all()
        np.testing.assert_array_equal(pixels[16:32, 24:40], 2.0)
        np.testing.assert_array_equal(pixels[0, 0], 3.0)

    def test_empty_pixels_are_invalid(self, two_depth_mpi):
        mpi = two_depth_mpi.copy()
        mpi.alpha[:, 0, 0] = 0.0
        pixels, valid = composite_flow_to_pixels(np.ones(mpi.shape + (2,)), mpi)
        assert not valid[0, 0]
        np.testing.assert_array_equal(pixels[0, 0], 0.0)

    def test_shape_checked(self, two_depth_mpi):
        with pytest.raises(DimensionError):
            composite_flow_to_pixels(np.zeros((1, 2, 2, 2)), two_depth_mpi)


# =============================================================================
# REPORTS
# =============================================================================

SIZE = (96, 136, 3)


class TestEvalReport:
    """Test scoring, aggregation and serialisation."""

    def test_score_frame_exact_match(self, rng):
        frame = rng.uniform(size=SIZE)
        score = score_frame(7, frame, frame)
        assert score.exact_match
        assert score.psnr == PSNR_CAP
        assert score.ssim == pytest.approx(1.0)

    def test_score_frame_uncropped(self, rng):
        a, b = rng.uniform(size=(2, 32, 32, 3))
        score = score_frame(0, a, b, crop=False)
        assert not score.exact_match
        assert score.psnr == pytest.approx(psnr(a, b))

    def test_summary_means(self):
        report = EvalReport()
        report.add(FrameScore(1, 30.0, 0.9))
        report.add(FrameScore(2, 40.0, 0.7, aepe=2.0))
        summary = report.summary()
        assert summary['frames'] == 2
        assert summary['mean_psnr'] == pytest.approx(35.0)
        assert summary['mean_ssim'] == pytest.approx(0.8)
        assert summary['mean_aepe'] == pytest.approx(2.0)
        assert summary['exact_matches'] == 0

    def test_empty_report(self):
        report = EvalReport()
        assert np.isnan(report.mean_psnr)
        assert report.mean_aepe is None

    def test_csv_and_json(self, tmp_path):
        report = EvalReport(cropped=False)
        report.add(FrameScore(3, 25.5, 0.5))
        report.to_csv(tmp_path / "r.csv")
        report.to_json(tmp_path / "r.json")

        with open(tmp_path / "r.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['frame_index', 'psnr', 'ssim', 'aepe']
        assert rows[1] == ['3', '25.500000', '0.500000', '']

        payload = json.loads((tmp_path / "r.json").read_text())
        assert payload['cropped'] is False
        assert payload['per_frame'][0]['frame_index'] == 3

    def test_evaluate_identical_directories(self, tmp_path, rng):
        for name in ("pred", "gt"):
            (tmp_path / name).mkdir()
        image = rng.integers(0, 256, SIZE, dtype=np.uint8)
        for index in (4, 5):
            iio.imwrite(tmp_path / "pred" / f"{index:04d}.png", image)
            iio.imwrite(tmp_path / "gt" / f"{index:04d}.png", image)
        iio.imwrite(tmp_path / "pred" / "0009.png", image)

        report = evaluate_directories(tmp_path / "pred", tmp_path / "gt")
        assert [f.frame_index for f in report.frames] == [4, 5]
        assert report.mean_ssim == pytest.approx(1.0)
        assert all(f.exact_match for f in report.frames)

    def test_no_common_frames_rejected(self, tmp_path):
        (tmp_path / "pred").mkdir()
        (tmp_path / "gt").mkdir()
        with pytest.raises(InputError):
            evaluate_directories(tmp_path / "pred", tmp_path / "gt")
