"""PSNR и SSIM на изображениях в [0, 1]."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import correlate

from cdgnet.errors import DimensionError

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1 = 0.01
K2 = 0.03
DATA_RANGE = 1.0


def _pair_arrays(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"metric operands differ: {a.shape} vs {b.shape}", axis="shape")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10·log10(1/mse) по всем каналам; у одинаковых картинок math.inf."""
    a, b = _pair_arrays(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE**2 / mse)


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(coords**2) / (2 * sigma**2))
    g /= g.sum()
    return g[:, None] * g[None, :]


def _ssim_plane(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    c1 = (K1 * DATA_RANGE) ** 2
    c2 = (K2 * DATA_RANGE) ** 2

    def blur(plane: np.ndarray) -> np.ndarray:
        return correlate(plane, window, mode="reflect")

    mu_x = blur(x)
    mu_y = blur(y)
    sigma_xx = blur(x * x) - mu_x * mu_x
    sigma_yy = blur(y * y) - mu_y * mu_y
    sigma_xy = blur(x * y) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_xx + sigma_yy + c2)
    return float(np.mean(numerator / denominator))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """SSIM с гауссовым окном 11×11 (σ=1.5), усреднённый по каналам; края отражаются.

    Принимает (H, W), (C, H, W) или (N, C, H, W).
    """
    a, b = _pair_arrays(a, b)
    if a.ndim < 2:
        raise DimensionError(f"ssim needs at least two axes, got {a.shape}", axis="height")
    window = gaussian_window()
    planes_a = a.reshape(-1, *a.shape[-2:])
    planes_b = b.reshape(-1, *b.shape[-2:])
    scores = [_ssim_plane(x, y, window) for x, y in zip(planes_a, planes_b)]
    return float(np.mean(scores))


@dataclass(slots=True)
class MetricRow:
    name: str
    psnr: float
    ssim: float


def mean_row(rows: Sequence[MetricRow]) -> MetricRow:
    """Арифметическое среднее по строкам; одна бесконечная PSNR делает бесконечным и среднее."""
    return MetricRow(
        name="mean",
        psnr=float(np.mean([row.psnr for row in rows])),
        ssim=float(np.mean([row.ssim for row in rows])),
    )


def format_metric_csv(rows: Sequence[MetricRow]) -> str:
    lines = ["name,psnr,ssim"]
    lines.extend(f"{row.name},{row.psnr:.12g},{row.ssim:.12g}" for row in [*rows, mean_row(rows)])
    return "\n".join(lines) + "\n"
