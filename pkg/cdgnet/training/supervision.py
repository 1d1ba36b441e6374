"""Карта резкости, бинарная маска, цели для двух ветвей и три слагаемых лосса."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.ndimage import gaussian_filter

from cdgnet.data.metrics import DATA_RANGE, K1, K2, gaussian_window
from cdgnet.errors import ConfigError, DimensionError
from cdgnet.tensor import Tensor, absolute, conv2d, ewise, mean

SMOOTHING_SIGMA = 2.0
NORMALIZING_PERCENTILE = 99.5
DENOMINATOR_FLOOR = 1e-8
LUMA = np.array([0.299, 0.587, 0.114])


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda1: float = Field(0.1, ge=0.0)
    lambda2: float = Field(0.1, ge=0.0)


def luma(image: np.ndarray) -> np.ndarray:
    """(…, 3, H, W) → (…, H, W) по весам 0.299/0.587/0.114."""
    return np.moveaxis(np.asarray(image, dtype=np.float64), -3, -1) @ LUMA


def gradient_energy(image: np.ndarray) -> np.ndarray:
    """Сглаженная (σ=2) величина градиента яркости одного изображения (3, H, W) → (H, W)."""
    y = luma(image)
    gy, gx = np.gradient(y)
    return gaussian_filter(np.hypot(gy, gx), sigma=SMOOTHING_SIGMA, mode="reflect")


def sharpness_map(image: np.ndarray, denominator: Optional[float] = None) -> np.ndarray:
    """S ∈ [0, 1] формы (N, 1, H, W): энергия градиента, делённая на свой 99.5-й перцентиль.

    Прокси вместо внешней оценки резкости. `denominator` позволяет сравнивать
    две картинки в одной шкале.
    """
    batch = np.asarray(image)
    if batch.ndim == 3:
        batch = batch[None]
    maps = []
    for single in batch:
        energy = gradient_energy(single)
        scale = denominator if denominator is not None else np.percentile(energy, NORMALIZING_PERCENTILE)
        maps.append(np.clip(energy / max(float(scale), DENOMINATOR_FLOOR), 0.0, 1.0))
    return np.stack(maps)[:, None]


def sharpness_mask(s: np.ndarray, mu: float) -> np.ndarray:
    """M = max(0, sign(S - μ)): единица строго выше порога, на самом пороге ноль."""
    return np.maximum(0.0, np.sign(np.asarray(s) - mu)).astype(np.float32)


def mask_sweep(s: np.ndarray, mus: Sequence[float]) -> list[tuple[float, float]]:
    """Доля «резких» пикселей для набора порогов, по ней подбирают μ под прокси."""
    return [(float(mu), float(sharpness_mask(s, mu).mean())) for mu in mus]


def branch_targets(i_gt: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """S_gt = M ⊙ I_gt, L_gt = (1 - M) ⊙ I_gt; маска одноканальная и растягивается на RGB."""
    i_gt = np.asarray(i_gt)
    m = np.asarray(m, dtype=i_gt.dtype)
    return m * i_gt, (1 - m) * i_gt


def _require_same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"loss operands differ: {a.shape} vs {b.shape}", axis="shape")


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b)
    diff = a - b
    return mean(diff * diff)


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b)
    return mean(absolute(a - b))


SSIM_OFFSET = 0.5


def _window_weight(channels: int, dtype) -> np.ndarray:
    window = gaussian_window()
    weight = np.zeros((channels, channels, *window.shape), dtype=dtype)
    for c in range(channels):
        weight[c, c] = window
    return weight


def ssim_loss(a: Tensor, b: Tensor) -> Tensor:
    """1 − SSIM с тем же гауссовым окном, что и у метрики, посчитанный на графе.

    Нормированные входы сдвигаются обратно в [0, 1]. Края дополняются нулями,
    а локальные средние делятся на вес окна внутри картинки, так что у краёв
    окно просто усекается.
    """
    _require_same_shape(a, b)
    channels, height, width = a.shape[1:]
    weight = Tensor(_window_weight(channels, a.dtype))
    pad = weight.shape[-1] // 2
    coverage = conv2d(
        Tensor(np.ones((1, 1, height, width), dtype=a.dtype)), Tensor(weight.data[:1, :1]), pad=pad
    ).data
    norm = Tensor(1.0 / coverage)

    def local_mean(t: Tensor) -> Tensor:
        return ewise(conv2d(t, weight, pad=pad), norm, "mul")

    x = a + SSIM_OFFSET
    y = b + SSIM_OFFSET
    mu_x = local_mean(x)
    mu_y = local_mean(y)
    sigma_xx = local_mean(x * x) - mu_x * mu_x
    sigma_yy = local_mean(y * y) - mu_y * mu_y
    sigma_xy = local_mean(x * y) - mu_x * mu_y
    c1 = (K1 * DATA_RANGE) ** 2
    c2 = (K2 * DATA_RANGE) ** 2
    numerator = (mu_x * mu_y * 2.0 + c1) * (sigma_xy * 2.0 + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_xx + sigma_yy + c2)
    return 1.0 - mean(ewise(numerator, denominator, "div"))


RECONSTRUCTION_LOSSES = {"l2": mse_loss, "l1": l1_loss, "ssim": ssim_loss}


@dataclass(slots=True)
class LossTerms:
    total: Tensor
    rec: Tensor
    small: Tensor
    large: Tensor

    def values(self) -> dict[str, float]:
        return {
            "total": self.total.item(),
            "rec": self.rec.item(),
            "s": self.small.item(),
            "l": self.large.item(),
        }


def _head_loss(head: Optional[Tensor], target: np.ndarray) -> Tensor:
    if head is None:
        return Tensor(np.zeros((), dtype=target.dtype))
    return mse_loss(head, Tensor(target))


def combine_losses(rec: Tensor, small: Tensor, large: Tensor, weights: LossWeights) -> Tensor:
    """loss = L_rec + λ1·L_s + λ2·L_l."""
    return rec + small * weights.lambda1 + large * weights.lambda2


def loss_terms(
    i_hat: Tensor,
    l_img: Optional[Tensor],
    s_img: Optional[Tensor],
    i_gt: np.ndarray,
    m: np.ndarray,
    weights: Optional[LossWeights] = None,
    rec_loss: str = "l2",
) -> LossTerms:
    """Три слагаемых лосса; голова, переданная как None, даёт нулевое слагаемое."""
    if rec_loss not in RECONSTRUCTION_LOSSES:
        raise ConfigError(f"unknown reconstruction loss {rec_loss!r}", key="rec_loss")
    weights = weights or LossWeights()
    target = np.asarray(i_gt, dtype=i_hat.dtype)
    s_gt, l_gt = branch_targets(target, m)
    rec = RECONSTRUCTION_LOSSES[rec_loss](i_hat, Tensor(target))
    small = _head_loss(s_img, s_gt)
    large = _head_loss(l_img, l_gt)
    return LossTerms(total=combine_losses(rec, small, large, weights), rec=rec, small=small, large=large)


def total_loss(
    i_hat: Tensor,
    l_img: Optional[Tensor],
    s_img: Optional[Tensor],
    i_gt: np.ndarray,
    m: np.ndarray,
    weights: Optional[LossWeights] = None,
) -> Tensor:
    return loss_terms(i_hat, l_img, s_img, i_gt, m, weights).total
