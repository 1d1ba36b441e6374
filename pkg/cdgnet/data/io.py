"""PNG ввод-вывод через Pillow и перевод между [0, 1] и входом сети [-0.5, 0.5]."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from cdgnet.errors import ImageFormatError, InputError
from cdgnet.storage import atomic_path

SIXTEEN_BIT_MODES = ("I", "I;16", "I;16B", "I;16L", "I;16N")
MASK_LEVELS = (0, 255)


def _rawmode(image: Image.Image) -> str:
    if not image.tile:
        return image.mode
    args = image.tile[0][3]
    return args[0] if isinstance(args, tuple) else str(args)


def _open_png(path: Path) -> Image.Image:
    try:
        image = Image.open(path)
    except FileNotFoundError as exc:
        raise InputError(f"image not found: {path}") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"cannot decode image {path}: {exc}") from exc
    if image.format != "PNG":
        image.close()
        raise ImageFormatError(f"{path}: expected PNG, got {image.format}")
    if image.mode in SIXTEEN_BIT_MODES or ";16" in _rawmode(image):
        image.close()
        raise ImageFormatError(f"{path}: unsupported bit depth (16-bit PNG), expected 8-bit")
    return image


def load_image(path: Path) -> np.ndarray:
    """8-битный RGB PNG → float32 (3, H, W) в [0, 1]. Любой другой формат даёт явную ошибку."""
    path = Path(path)
    with _open_png(path) as image:
        if image.mode != "RGB":
            raise ImageFormatError(f"{path}: unsupported channels (mode {image.mode}), expected 8-bit RGB")
        pixels = np.asarray(image, dtype=np.uint8)
    return (pixels.astype(np.float32) / 255.0).transpose(2, 0, 1).copy()


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Clamp в [0, 1] и округление половины вверх: floor(x·255 + 0.5)."""
    clamped = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def _write_png(image: Image.Image, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with atomic_path(path) as tmp:
        image.save(tmp, format="PNG")


def save_image(image: np.ndarray, path: Path) -> None:
    array = np.asarray(image)
    if array.ndim != 3 or array.shape[0] != 3:
        raise ImageFormatError(f"save_image expects (3, H, W), got {array.shape}")
    _write_png(Image.fromarray(np.ascontiguousarray(to_uint8(array).transpose(1, 2, 0))), path)


def save_gray(image: np.ndarray, path: Path) -> None:
    """Одноканальная карта (H, W) в [0, 1] → 8-битный grayscale PNG."""
    array = np.asarray(image)
    if array.ndim != 2:
        raise ImageFormatError(f"save_gray expects (H, W), got {array.shape}")
    _write_png(Image.fromarray(to_uint8(array)), path)


def load_mask(path: Path) -> np.ndarray:
    """Внешняя маска резкости: 8 бит, один канал, только 0 и 255 → float32 (1, H, W) из нулей и единиц."""
    path = Path(path)
    with _open_png(path) as image:
        if image.mode != "L":
            raise ImageFormatError(f"{path}: mask must be 8-bit single channel, got mode {image.mode}")
        pixels = np.asarray(image, dtype=np.uint8)
    if not np.all(np.isin(pixels, MASK_LEVELS)):
        raise ImageFormatError(f"{path}: mask values must be 0 or 255")
    return (pixels == 255).astype(np.float32)[None]


def normalize(image01: np.ndarray) -> np.ndarray:
    return np.asarray(image01, dtype=np.float32) - np.float32(0.5)


def denormalize(net_out: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(net_out) + 0.5, 0.0, 1.0)
