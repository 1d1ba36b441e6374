"""Инференс на картинке произвольного размера: reflect-паддинг до кратного 4, прогон без графа, обрезка обратно."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import zoom

from cdgnet.data.io import denormalize, normalize
from cdgnet.models.network import CDGNet
from cdgnet.nn.blocks import AttentionMaps
from cdgnet.tensor import Tensor, no_grad

logger = logging.getLogger("cdgnet.model")

MULTIPLE = 4


@dataclass(slots=True)
class DeblurResult:
    """Все картинки (3, H, W) в [0, 1], карты внимания (H, W); размеры совпадают со входом.

    Выходы и карты отсутствующей ветви одноветвевой сети равны None.
    """

    image: np.ndarray
    large_image: Optional[np.ndarray]
    small_image: Optional[np.ndarray]
    attention_large: Optional[np.ndarray]
    attention_small: Optional[np.ndarray]
    padding: tuple[int, int]


def reflect_pad(image: np.ndarray, multiple: int = MULTIPLE) -> tuple[np.ndarray, tuple[int, int]]:
    height, width = image.shape[-2:]
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if not pad_h and not pad_w:
        return image, (0, 0)
    widths = [(0, 0)] * (image.ndim - 2) + [(0, pad_h), (0, pad_w)]
    return np.pad(image, widths, mode="reflect"), (pad_h, pad_w)


def _upscale_map(maps: Optional[AttentionMaps], height: int, width: int) -> Optional[np.ndarray]:
    if maps is None or maps.spatial is None:
        return None
    plane = np.asarray(maps.spatial.data[0, 0], dtype=np.float64)
    factors = (height / plane.shape[0], width / plane.shape[1])
    return np.clip(zoom(plane, factors, order=1, mode="nearest", grid_mode=True), 0.0, 1.0)


def deblur_image(model: CDGNet, image01: np.ndarray) -> DeblurResult:
    """Прогоняем одну картинку (3, H, W) в [0, 1] через сеть и возвращаем всё, что стоит сохранить."""
    height, width = image01.shape[-2:]
    padded, padding = reflect_pad(np.asarray(image01, dtype=np.float32))
    if any(padding):
        logger.info("reflect_pad height=%d width=%d pad_h=%d pad_w=%d", height, width, *padding)

    with no_grad():
        output = model(Tensor(normalize(padded)[None]))

    padded_h, padded_w = padded.shape[-2:]

    def crop(array: np.ndarray) -> np.ndarray:
        return array[..., :height, :width]

    def as_image(tensor: Optional[Tensor]) -> Optional[np.ndarray]:
        if tensor is None:
            return None
        return crop(denormalize(tensor.data[0]))

    large = _upscale_map(output.large_maps, padded_h, padded_w)
    small = _upscale_map(output.small_maps, padded_h, padded_w)
    return DeblurResult(
        image=as_image(output.image),
        large_image=as_image(output.large_image),
        small_image=as_image(output.small_image),
        attention_large=None if large is None else crop(large),
        attention_small=None if small is None else crop(small),
        padding=padding,
    )
