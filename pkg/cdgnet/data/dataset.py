"""Парный датасет root/blur + root/sharp, случайные кропы и сборка батчей по эпохам."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from cdgnet.data.io import load_image, load_mask, normalize
from cdgnet.errors import InputError
from cdgnet.training.supervision import sharpness_map, sharpness_mask

logger = logging.getLogger("cdgnet.data")

BLUR_DIR = "blur"
SHARP_DIR = "sharp"
MASK_DIR = "mask"


@dataclass(slots=True)
class ImagePair:
    """Пара в пространстве сети: blurry и sharp (1, 3, H, W) в [−0.5, 0.5], mask (1, 1, H, W)."""

    name: str
    blurry: np.ndarray
    sharp: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        extents = {self.blurry.shape[-2:], self.sharp.shape[-2:], self.mask.shape[-2:]}
        if len(extents) != 1:
            raise InputError(
                f"pair {self.name}: extents differ (blurry {self.blurry.shape}, "
                f"sharp {self.sharp.shape}, mask {self.mask.shape})"
            )

    @property
    def height(self) -> int:
        return int(self.blurry.shape[-2])

    @property
    def width(self) -> int:
        return int(self.blurry.shape[-1])


@dataclass(slots=True)
class Batch:
    blurry: np.ndarray
    sharp: np.ndarray
    mask: np.ndarray
    names: tuple[str, ...]


def list_pairs(root: Path) -> list[str]:
    """Имена, которые есть и в blur/, и в sharp/; непарные файлы перечисляются в warning и пропускаются."""
    root = Path(root)
    blur_dir, sharp_dir = root / BLUR_DIR, root / SHARP_DIR
    if not blur_dir.is_dir() or not sharp_dir.is_dir():
        raise InputError(f"dataset {root} needs {BLUR_DIR}/ and {SHARP_DIR}/ directories")
    blurred = {p.name for p in blur_dir.glob("*.png")}
    sharp = {p.name for p in sharp_dir.glob("*.png")}
    unpaired = sorted(blurred ^ sharp)
    if unpaired:
        logger.warning("dataset=%s unpaired=%d skipped=%s", root, len(unpaired), ",".join(unpaired))
    names = sorted(blurred & sharp)
    if not names:
        raise InputError(f"dataset {root} has no blur/sharp pairs")
    return names


def make_pair(name: str, blurry01: np.ndarray, sharp01: np.ndarray, mu: float, mask: Optional[np.ndarray] = None) -> ImagePair:
    """Маска берётся из файла, если он есть, иначе считается по размытому входу с порогом μ."""
    if mask is None:
        mask = sharpness_mask(sharpness_map(blurry01), mu)
    else:
        mask = np.asarray(mask, dtype=np.float32).reshape(1, 1, *mask.shape[-2:])
    return ImagePair(
        name=name,
        blurry=normalize(blurry01)[None],
        sharp=normalize(sharp01)[None],
        mask=mask.astype(np.float32),
    )


def load_paired_dataset(root: Path, mu: float = 0.96) -> list[ImagePair]:
    root = Path(root)
    pairs = []
    for name in list_pairs(root):
        mask_path = root / MASK_DIR / name
        mask = load_mask(mask_path) if mask_path.is_file() else None
        pairs.append(make_pair(name, load_image(root / BLUR_DIR / name), load_image(root / SHARP_DIR / name), mu, mask))
    logger.info("dataset=%s pairs=%d mu=%.3f", root, len(pairs), mu)
    return pairs


def random_crop(pair: ImagePair, size: int, rng: np.random.Generator) -> ImagePair:
    """Одно и то же окно size×size для blurry, sharp и mask; сдвиг равномерен по (H−size+1)×(W−size+1)."""
    if size > min(pair.height, pair.width):
        raise InputError(f"crop {size} exceeds image {pair.height}x{pair.width} of pair {pair.name}")
    top = int(rng.integers(0, pair.height - size + 1))
    left = int(rng.integers(0, pair.width - size + 1))
    window = (Ellipsis, slice(top, top + size), slice(left, left + size))
    return ImagePair(
        name=pair.name,
        blurry=pair.blurry[window],
        sharp=pair.sharp[window],
        mask=pair.mask[window],
    )


def batches_per_epoch(pair_count: int, batch: int) -> int:
    return pair_count // batch


def epoch_batches(
    pairs: Sequence[ImagePair], batch: int, crop: int, seed: int, epoch: int
) -> Iterator[Batch]:
    """Одна эпоха с отбрасыванием неполного хвоста.

    Порядок пар задаётся генератором (seed, epoch), окно кропа каждой пары своим
    генератором (seed, epoch, index), так что результат не зависит от порядка обхода.
    """
    order = np.random.default_rng([seed, epoch]).permutation(len(pairs))
    for start in range(0, batches_per_epoch(len(pairs), batch) * batch, batch):
        crops = [
            random_crop(pairs[index], crop, np.random.default_rng([seed, epoch, int(index)]))
            for index in order[start : start + batch]
        ]
        yield Batch(
            blurry=np.concatenate([c.blurry for c in crops]),
            sharp=np.concatenate([c.sharp for c in crops]),
            mask=np.concatenate([c.mask for c in crops]),
            names=tuple(c.name for c in crops),
        )
