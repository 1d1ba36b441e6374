import math

import numpy as np
import pytest

from cdgnet.data.metrics import MetricRow, format_metric_csv, gaussian_window, mean_row, psnr, ssim
from cdgnet.errors import DimensionError


def test_psnr_of_a_uniform_offset():
    a = np.full((3, 8, 8), 0.5)
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_psnr_of_identical_images_is_infinite(rng):
    a = rng.uniform(size=(3, 5, 5))
    assert psnr(a, a) == math.inf


def test_ssim_identity_and_symmetry(rng):
    a = rng.uniform(size=(3, 24, 24))
    b = np.clip(a + rng.normal(0, 0.05, size=a.shape), 0, 1)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert ssim(a, b) < 1.0


def test_ssim_of_an_inverted_checkerboard_is_low():
    yy, xx = np.mgrid[0:32, 0:32]
    board = ((yy // 4 + xx // 4) % 2).astype(np.float64)
    assert ssim(board, 1.0 - board) < 0.1


def test_gaussian_window_is_normalized():
    window = gaussian_window()
    assert window.shape == (11, 11)
    assert window.sum() == pytest.approx(1.0)
    assert window[5, 5] == window.max()


def test_metrics_reject_shape_mismatch():
    with pytest.raises(DimensionError):
        psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))
    with pytest.raises(DimensionError):
        ssim(np.zeros((3, 4, 4)), np.zeros((3, 5, 4)))


def test_metric_csv_has_rows_and_mean():
    rows = [MetricRow("a.png", 20.0, 0.5), MetricRow("b.png", 30.0, 0.7)]
    lines = format_metric_csv(rows).splitlines()
    assert lines[0] == "name,psnr,ssim"
    assert len(lines) == 4
    name, value, structural = lines[-1].split(",")
    assert name == "mean"
    assert float(value) == pytest.approx(25.0)
    assert float(structural) == pytest.approx(0.6)
    assert mean_row(rows).psnr == 25.0
