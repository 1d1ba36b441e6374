"""Синтетический неоднородный блюр: два линейных ядра движения, смешанные гладкой картой α, плюс шум."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import convolve, gaussian_filter

from cdgnet.config import Config
from cdgnet.data.io import save_image

logger = logging.getLogger("cdgnet.data")


def line_kernel(length: int, angle: float) -> np.ndarray:
    """Нормированное ядро прямолинейного движения длиной `length` пикселей под углом `angle` (радианы).

    Точки отрезка раскладываются по соседним пикселям билинейно, поэтому
    горизонтальное ядро целой длины в точности box-фильтр 1×length.
    """
    if length < 1:
        raise ValueError(f"kernel length must be >= 1, got {length}")
    half = (length - 1) / 2.0
    size = 2 * math.ceil(half) + 1
    center = size // 2
    kernel = np.zeros((size, size), dtype=np.float64)

    t = np.linspace(-half, half, length)
    ys = np.round(center - t * math.sin(angle), 12)
    xs = np.round(center + t * math.cos(angle), 12)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    ly = ys - y0
    lx = xs - x0
    for dy, wy in ((0, 1 - ly), (1, ly)):
        for dx, wx in ((0, 1 - lx), (1, lx)):
            yy = np.clip(y0 + dy, 0, size - 1)
            xx = np.clip(x0 + dx, 0, size - 1)
            np.add.at(kernel, (yy, xx), wy * wx)

    return kernel / kernel.sum()


@dataclass(slots=True)
class BlurField:
    """Параметры одного синтетического блюра: два ядра, карта смешивания и шум."""

    large_length: int
    large_angle: float
    small_length: int
    small_angle: float
    alpha: np.ndarray
    noise_sigma: float = 0.005

    def __post_init__(self) -> None:
        if self.large_length < 1 or self.small_length < 1:
            raise ValueError("blur kernel lengths must be >= 1")
        self.alpha = np.clip(np.asarray(self.alpha, dtype=np.float64), 0.0, 1.0)

    @property
    def large_kernel(self) -> np.ndarray:
        return line_kernel(self.large_length, self.large_angle)

    @property
    def small_kernel(self) -> np.ndarray:
        return line_kernel(self.small_length, self.small_angle)


def half_plane_alpha(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Случайная полуплоскость со сглаженной границей: α = 1 означает сильный блюр, α = 0 слабый."""
    phi = rng.uniform(0.0, 2.0 * math.pi)
    cy = rng.uniform(0.25, 0.75) * (height - 1)
    cx = rng.uniform(0.25, 0.75) * (width - 1)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    hard = ((yy - cy) * math.cos(phi) + (xx - cx) * math.sin(phi) > 0).astype(np.float64)
    return np.clip(gaussian_filter(hard, sigma=max(1.0, min(height, width) / 16.0), mode="nearest"), 0.0, 1.0)


def random_blur_field(
    height: int,
    width: int,
    rng: np.random.Generator,
    config: Optional[Config] = None,
    large_min: Optional[int] = None,
) -> BlurField:
    config = config or Config()
    low = config.large_blur_min if large_min is None else max(large_min, config.large_blur_min)
    return BlurField(
        large_length=int(rng.integers(low, max(low, config.large_blur_max) + 1)),
        large_angle=float(rng.uniform(0.0, math.pi)),
        small_length=int(rng.integers(config.small_blur_min, config.small_blur_max + 1)),
        small_angle=float(rng.uniform(0.0, math.pi)),
        alpha=half_plane_alpha(height, width, rng),
        noise_sigma=config.noise_sigma,
    )


def _blur_channels(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.stack([convolve(channel, kernel, mode="reflect") for channel in image])


def synth_blur(sharp: np.ndarray, field: BlurField, rng: np.random.Generator) -> np.ndarray:
    """B = α·(I⊗K_large) + (1−α)·(I⊗K_small) + n, обрезанное в [0, 1]. `sharp` имеет форму (3, H, W) в [0, 1]."""
    image = np.asarray(sharp, dtype=np.float64)
    if field.alpha.shape != image.shape[-2:]:
        raise ValueError(f"alpha map {field.alpha.shape} does not match image {image.shape[-2:]}")
    large = _blur_channels(image, field.large_kernel)
    small = _blur_channels(image, field.small_kernel)
    blurry = field.alpha * large + (1.0 - field.alpha) * small
    if field.noise_sigma > 0:
        blurry = blurry + rng.normal(0.0, field.noise_sigma, size=blurry.shape)
    return np.clip(blurry, 0.0, 1.0).astype(np.float32)


def procedural_texture(size: int, rng: np.random.Generator) -> np.ndarray:
    """Резкая тестовая картинка (3, size, size): прямоугольники, полосы и шахматка на цветном фоне."""
    image = np.empty((3, size, size), dtype=np.float64)
    image[:] = rng.uniform(0.1, 0.9, size=(3, 1, 1))
    yy, xx = np.mgrid[0:size, 0:size]

    for _ in range(int(rng.integers(4, 9))):
        h, w = rng.integers(size // 8, size // 2, size=2)
        top, left = rng.integers(0, size - h), rng.integers(0, size - w)
        image[:, top : top + h, left : left + w] = rng.uniform(0.0, 1.0, size=(3, 1, 1))

    period = int(rng.integers(3, 9))
    phi = rng.uniform(0.0, math.pi)
    stripes = ((yy * math.cos(phi) + xx * math.sin(phi)) // period) % 2 == 0
    band = (yy >= size // 3) & (yy < size // 3 + size // 4)
    image[:, stripes & band] = rng.uniform(0.0, 1.0, size=(3, 1))

    cell = int(rng.integers(2, 7))
    board = ((yy // cell + xx // cell) % 2).astype(bool)
    corner = (yy >= size - size // 3) & (xx >= size - size // 3)
    image[:, board & corner] = 1.0 - image[:, board & corner]
    return image.astype(np.float32)


def synth_pair(
    size: int, rng: np.random.Generator, config: Optional[Config] = None, large_min: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray, BlurField]:
    sharp = procedural_texture(size, rng)
    field = random_blur_field(size, size, rng, config, large_min=large_min)
    return sharp, synth_blur(sharp, field, rng), field


def synth_dataset(root: Path, count: int, size: int, seed: int, config: Optional[Config] = None) -> list[str]:
    """Пишем root/sharp/NNNN.png и root/blur/NNNN.png; у каждой пары свой поток случайности (seed, index)."""
    root = Path(root)
    names = []
    for index in range(count):
        rng = np.random.default_rng([seed, index])
        sharp, blurry, field = synth_pair(size, rng, config)
        name = f"{index:04d}.png"
        save_image(sharp, root / "sharp" / name)
        save_image(blurry, root / "blur" / name)
        logger.debug("pair=%s large_length=%d small_length=%d", name, field.large_length, field.small_length)
        names.append(name)
    logger.info("synth root=%s pairs=%d size=%d seed=%d", root, count, size, seed)
    return names
