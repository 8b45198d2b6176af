"""MSE/PSNR and their foreground-restricted variants against hand arithmetic
and a naive per-pixel reference implementation."""

import numpy as np
import pytest

from conftest import random_image
from harmkit.errors import ParameterError, ShapeError
from harmkit.imaging import ForegroundMask, ImageBuffer
from harmkit.metrics import (
    PSNR_CAP_DB,
    MetricReport,
    aggregate,
    evaluate,
    fmse,
    fpsnr,
    mse,
    psnr,
)


def naive_mse(pred, gt):
    total, n = 0.0, 0
    for r in range(pred.height):
        for c in range(pred.width):
            for ch in range(pred.channels):
                d = 255.0 * (pred.data[r, c, ch] - gt.data[r, c, ch])
                total += d * d
                n += 1
    return total / n


def naive_fmse(pred, gt, mask):
    total, n = 0.0, 0
    for r in range(pred.height):
        for c in range(pred.width):
            if mask.bits[r, c]:
                for ch in range(pred.channels):
                    d = 255.0 * (pred.data[r, c, ch] - gt.data[r, c, ch])
                    total += d * d
                    n += 1
    return total / n


class TestMse:
    def test_identical_images_zero(self, rng):
        img = random_image(rng)
        assert mse(img, img) == 0.0

    def test_black_vs_white(self):
        a = ImageBuffer.full(4, 4, 0.0)
        b = ImageBuffer.full(4, 4, 1.0)
        assert mse(a, b) == pytest.approx(65025.0)

    def test_hand_value_on_two_pixel_gray(self):
        a = ImageBuffer(np.array([[[0.0], [0.5]]]))
        b = ImageBuffer(np.array([[[0.0], [0.0]]]))
        assert mse(a, b) == pytest.approx(8128.125)

    def test_shape_mismatch_raises(self, rng):
        with pytest.raises(ShapeError):
            mse(random_image(rng, 4, 4), random_image(rng, 8, 8))

    def test_quantized_path_uses_u8_differences(self):
        a = ImageBuffer(np.array([[[0.5]]]))
        b = ImageBuffer(np.array([[[0.5 + 0.4 / 255.0]]]))
        assert mse(a, b) > 0.0
        # 0.5 -> 128 and 0.5 + 0.4/255 -> 128 as well: quantized error vanishes
        assert mse(a, b, quantized=True) == 0.0


class TestPsnr:
    def test_cap_for_identical_images(self, rng):
        img = random_image(rng)
        assert psnr(img, img) == PSNR_CAP_DB

    def test_full_scale_error_is_zero_db(self):
        a = ImageBuffer.full(4, 4, 0.0)
        b = ImageBuffer.full(4, 4, 1.0)
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_mid_scale_value(self):
        # mse of 172.5 corresponds to 10*log10(65025/172.5) dB
        a = ImageBuffer.full(2, 1, 0.0)
        delta = np.sqrt(172.5) / 255.0
        b = ImageBuffer.full(2, 1, float(delta))
        assert mse(a, b) == pytest.approx(172.5)
        assert psnr(a, b) == pytest.approx(25.7631, abs=1e-3)


class TestFmse:
    def test_full_mask_equals_mse_exactly(self, rng):
        pred, gt = random_image(rng), random_image(rng)
        mask = ForegroundMask(np.ones((16, 16), dtype=np.uint8))
        assert fmse(pred, gt, mask) == mse(pred, gt)

    def test_error_outside_mask_invisible(self, rng):
        gt = random_image(rng, 4, 4)
        arr = gt.data.copy()
        arr[0, 0] = 1.0 - arr[0, 0]
        pred = ImageBuffer(arr)
        bits = np.ones((4, 4), dtype=np.uint8)
        bits[0, 0] = 0
        mask = ForegroundMask(bits)
        assert fmse(pred, gt, mask) == 0.0
        assert fpsnr(pred, gt, mask) == PSNR_CAP_DB

    def test_hand_value_two_masked_pixels(self):
        pred = ImageBuffer(np.array([[[51.0 / 255.0], [0.0]], [[0.9], [0.9]]]))
        gt = ImageBuffer(np.array([[[0.0], [0.0]], [[0.1], [0.2]]]))
        mask = ForegroundMask(np.array([[1, 1], [0, 0]], dtype=np.uint8))
        assert fmse(pred, gt, mask) == pytest.approx(1300.5)

    def test_empty_mask_rejected(self, rng):
        img = random_image(rng, 4, 4)
        mask = ForegroundMask(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ParameterError):
            fmse(img, img, mask)

    def test_mask_size_mismatch_rejected(self, rng):
        img = random_image(rng, 4, 4)
        mask = ForegroundMask(np.ones((8, 8), dtype=np.uint8))
        with pytest.raises(ShapeError):
            fmse(img, img, mask)


class TestAgainstNaiveReference:
    def test_random_pairs_match_loop_reference(self, rng):
        for _ in range(25):
            pred = random_image(rng, 6, 5)
            gt = random_image(rng, 6, 5)
            bits = (rng.uniform(size=(6, 5)) < 0.6).astype(np.uint8)
            if bits.sum() == 0:
                bits[0, 0] = 1
            mask = ForegroundMask(bits)
            ref_mse = naive_mse(pred, gt)
            ref_fmse = naive_fmse(pred, gt, mask)
            assert mse(pred, gt) == pytest.approx(ref_mse, rel=1e-9)
            assert fmse(pred, gt, mask) == pytest.approx(ref_fmse, rel=1e-9)


class TestEvaluateAndAggregate:
    def test_evaluate_bundles_all_four(self, rng):
        pred, gt = random_image(rng), random_image(rng)
        bits = (rng.uniform(size=(16, 16)) < 0.5).astype(np.uint8)
        bits[0, 0] = 1
        mask = ForegroundMask(bits)
        rep = evaluate(pred, gt, mask)
        assert rep.mse == mse(pred, gt)
        assert rep.psnr == psnr(pred, gt)
        assert rep.fmse == fmse(pred, gt, mask)
        assert rep.fpsnr == fpsnr(pred, gt, mask)
        assert rep.fg_pixel_count == mask.count()

    def test_single_report_is_its_own_aggregate(self):
        rep = MetricReport(10.0, 30.0, 20.0, 25.0, 100)
        assert aggregate([rep]) == rep

    def test_psnr_mean_is_arithmetic_in_db(self):
        a = MetricReport(1.0, 30.0, 1.0, 30.0, 10)
        b = MetricReport(2.0, 40.0, 2.0, 40.0, 20)
        agg = aggregate([a, b])
        assert agg.psnr == pytest.approx(35.0)
        assert agg.fg_pixel_count == 15

    def test_mean_of_psnrs_differs_from_psnr_of_mean_mse(self):
        # mse 1 -> 48.13 dB, mse 10000 -> 8.13 dB; mean mse 5000.5 -> 11.14 dB
        reports = [
            MetricReport(1.0, 10.0 * np.log10(65025.0 / 1.0), 1.0, 0.0, 1),
            MetricReport(10000.0, 10.0 * np.log10(65025.0 / 10000.0), 1.0, 0.0, 1),
        ]
        agg = aggregate(reports)
        jensen = 10.0 * np.log10(65025.0 / agg.mse)
        assert abs(agg.psnr - jensen) > 5.0

    def test_empty_aggregate_rejected(self):
        with pytest.raises(ParameterError):
            aggregate([])
