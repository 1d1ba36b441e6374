"""Сборка сети: RDB-энкодер, два ACDA, большой и малый декодеры, ориентационное слияние."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cdgnet.config import Config
from cdgnet.errors import ConfigError, DimensionError, InputError
from cdgnet.nn.blocks import ACDA, RDB, AttentionMaps, ResBlock
from cdgnet.nn.deform import DeformConv2d
from cdgnet.nn.module import Conv2d, ConvTranspose2d, Module
from cdgnet.tensor import Tensor, concat, relu

logger = logging.getLogger("cdgnet.model")

LEVELS = 3
FUSION_MODES = ("off", "concat")
BRANCH_MODES = ("both", "large", "small")
ENCODER_KINDS = ("rdb", "resblock")

HORIZONTAL = np.ones((1, 3))
VERTICAL = np.ones((3, 1))
MAIN_DIAGONAL = np.eye(3)
ANTI_DIAGONAL = np.fliplr(np.eye(3)).copy()


def orientation_masks() -> dict[str, np.ndarray]:
    """Бинарные маски четырёх ориентационных ядер: у каждого ровно три обучаемых тапа."""
    return {
        "hori": HORIZONTAL,
        "vert": VERTICAL,
        "diag": MAIN_DIAGONAL,
        "adiag": ANTI_DIAGONAL,
    }


class Encoder(Module):
    """Три уровня: conv (шаг 1, 2, 2) и по два RDB; выход (N, C, H/4, W/4)."""

    def __init__(self, rng: np.random.Generator, channels: int, kind: str = "rdb") -> None:
        if kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {kind!r}", key="encoder")
        widths = (max(1, channels // 4), max(1, channels // 2), channels)
        cin = 3
        self.convs = []
        self.blocks = []
        for level, width in enumerate(widths):
            self.convs.append(Conv2d(rng, cin, width, 3, stride=1 if level == 0 else 2))
            for _ in range(2):
                self.blocks.append(RDB(rng, width) if kind == "rdb" else ResBlock(rng, width))
            cin = width

    def forward(self, image: Tensor) -> Tensor:
        height, width = image.shape[2:]
        if height % 4 or width % 4:
            raise InputError(
                f"input extents {height}x{width} must be divisible by 4; pad the image first"
            )
        out = image
        for level, conv in enumerate(self.convs):
            out = conv(out)
            for block in self.blocks[2 * level : 2 * level + 2]:
                out = block(out)
        return out


def _level_widths(channels: int, small_channels: int) -> tuple[int, int, int]:
    return channels, max(1, channels // 2), small_channels


class LargeDecoder(Module):
    """На каждом из трёх уровней три деформируемые свёртки, затем повышение ×2; проекционная голова 1×1 в RGB."""

    DEFORM_PER_LEVEL = 3

    def __init__(self, rng: np.random.Generator, channels: int, small_channels: int) -> None:
        widths = _level_widths(channels, small_channels)
        self.deforms = [
            [DeformConv2d(rng, width, width) for _ in range(self.DEFORM_PER_LEVEL)] for width in widths
        ]
        self.upsamples = [ConvTranspose2d(rng, widths[i], widths[i + 1]) for i in range(LEVELS - 1)]
        self.tail = Conv2d(rng, small_channels, small_channels, 3)
        self.head = Conv2d(rng, small_channels, 3, 1)

    def features(self, f: Tensor) -> Tensor:
        out = f
        for level in range(LEVELS):
            for layer in self.deforms[level]:
                out = relu(layer(out))
            if level < LEVELS - 1:
                out = relu(self.upsamples[level](out))
        return self.tail(out)

    def forward(self, f: Tensor) -> tuple[Tensor, Tensor]:
        features = self.features(f)
        return features, self.head(features)


class SmallDecoder(Module):
    """На каждом уровне два ResBlock, деформируемая свёртка и редукция 1×1, затем повышение ×2.

    ResBlock здесь с узким горлышком (половина ширины), так что ветвь остаётся
    легче большой при равных ширинах.
    """

    def __init__(self, rng: np.random.Generator, channels: int, small_channels: int) -> None:
        widths = _level_widths(channels, small_channels)
        self.blocks = [
            [ResBlock(rng, width, hidden=max(1, width // 2)) for _ in range(2)] for width in widths
        ]
        self.deforms = [DeformConv2d(rng, width, width) for width in widths]
        self.reductions = [
            Conv2d(rng, widths[i], widths[i + 1] if i < LEVELS - 1 else widths[i], 1)
            for i in range(LEVELS)
        ]
        self.upsamples = [ConvTranspose2d(rng, widths[i + 1], widths[i + 1]) for i in range(LEVELS - 1)]
        self.tail = Conv2d(rng, small_channels, small_channels, 3)
        self.head = Conv2d(rng, small_channels, 3, 1)

    def features(self, f: Tensor) -> Tensor:
        out = f
        for level in range(LEVELS):
            for block in self.blocks[level]:
                out = block(out)
            out = relu(self.deforms[level](out))
            out = self.reductions[level](out)
            if level < LEVELS - 1:
                out = relu(self.upsamples[level](out))
        return self.tail(out)

    def forward(self, f: Tensor) -> tuple[Tensor, Tensor]:
        features = self.features(f)
        return features, self.head(features)


class OrientationFilters(Module):
    """Четыре ориентационные свёртки одной ветви: 1×3, 3×1 и маскированные диагональные 3×3."""

    def __init__(self, rng: np.random.Generator, width: int) -> None:
        self.hori = Conv2d(rng, width, width, (1, 3))
        self.vert = Conv2d(rng, width, width, (3, 1))
        self.diag = Conv2d(rng, width, width, 3, mask=MAIN_DIAGONAL)
        self.adiag = Conv2d(rng, width, width, 3, mask=ANTI_DIAGONAL)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return self.hori(x), self.vert(x), self.diag(x), self.adiag(x)


class OFFModule(Module):
    """Î = Conv(cat(F_hori, F_vert, F_diag, F_adiag)), где F_o = Conv(cat(L_o, S_o))."""

    def __init__(self, rng: np.random.Generator, width: int) -> None:
        self.large = OrientationFilters(rng, width)
        self.small = OrientationFilters(rng, width)
        self.pairs = [Conv2d(rng, 2 * width, width, 3) for _ in range(4)]
        self.out = Conv2d(rng, 4 * width, 3, 3)

    def forward(self, l_out: Tensor, s_out: Tensor) -> Tensor:
        if l_out.shape != s_out.shape:
            raise DimensionError(
                f"branch features differ: {l_out.shape} vs {s_out.shape}", axis="channel"
            )
        fused = [
            pair(concat([lo, so]))
            for pair, lo, so in zip(self.pairs, self.large(l_out), self.small(s_out))
        ]
        return self.out(concat(fused))


class ConcatFusion(Module):
    """Вариант абляции: одна свёртка по склейке признаков двух ветвей."""

    def __init__(self, rng: np.random.Generator, width: int) -> None:
        self.out = Conv2d(rng, 2 * width, 3, 3)

    def forward(self, l_out: Tensor, s_out: Tensor) -> Tensor:
        if l_out.shape != s_out.shape:
            raise DimensionError(
                f"branch features differ: {l_out.shape} vs {s_out.shape}", axis="channel"
            )
        return self.out(concat([l_out, s_out]))


@dataclass(slots=True)
class DeblurOutput:
    """Выходы прохода; у одноветвевой сети поля отсутствующей ветви равны None."""

    image: Tensor
    large_image: Optional[Tensor]
    small_image: Optional[Tensor]
    large_features: Optional[Tensor]
    small_features: Optional[Tensor]
    encoded: Tensor
    large_maps: Optional[AttentionMaps]
    small_maps: Optional[AttentionMaps]

    def branch_heads(self) -> tuple[Optional[Tensor], Optional[Tensor]]:
        """Головы ветвей для лосса: (L_img, S_img) у двухветвевой сети, иначе (None, None)."""
        if self.large_image is None or self.small_image is None:
            return None, None
        return self.large_image, self.small_image


class CDGNet(Module):
    """Один энкодер на обе ветви, по ACDA и декодеру на ветвь, затем слияние.

    При `branches=large|small` строится одна ветвь, слияния нет, а выходом сети
    служит проекционная голова этой ветви.
    """

    def __init__(self, config: Config, rng: Optional[np.random.Generator] = None) -> None:
        if config.fusion not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {config.fusion!r}", key="fusion")
        if config.branches not in BRANCH_MODES:
            raise ConfigError(f"unknown branch mode {config.branches!r}", key="branches")
        rng = rng if rng is not None else np.random.default_rng(config.init_seed)
        channels = config.channels
        self.branches = config.branches
        use_large = config.branches in ("both", "large")
        use_small = config.branches in ("both", "small")
        self.encoder = Encoder(rng, channels, config.encoder)
        self.attention_large = ACDA(rng, channels, config.reduction_ratio, config.attention) if use_large else None
        self.attention_small = ACDA(rng, channels, config.reduction_ratio, config.attention) if use_small else None
        self.large_decoder = LargeDecoder(rng, channels, config.small_channels) if use_large else None
        self.small_decoder = SmallDecoder(rng, channels, config.small_channels) if use_small else None
        self.fusion = None
        if config.branches == "both":
            if config.fusion == "off":
                self.fusion = OFFModule(rng, config.small_channels)
            else:
                self.fusion = ConcatFusion(rng, config.small_channels)
        self.name_parameters()

    def forward(self, blurry: Tensor) -> DeblurOutput:
        encoded = self.encoder(blurry)
        large_features = large_image = large_maps = None
        small_features = small_image = small_maps = None
        if self.large_decoder is not None:
            f_large, large_maps = self.attention_large.attend(encoded)
            large_features, large_image = self.large_decoder(f_large)
        if self.small_decoder is not None:
            f_small, small_maps = self.attention_small.attend(encoded)
            small_features, small_image = self.small_decoder(f_small)
        if self.fusion is not None:
            image = self.fusion(large_features, small_features)
        else:
            image = large_image if large_image is not None else small_image
        return DeblurOutput(
            image=image,
            large_image=large_image,
            small_image=small_image,
            large_features=large_features,
            small_features=small_features,
            encoded=encoded,
            large_maps=large_maps,
            small_maps=small_maps,
        )


def encoder_forward(image: Tensor, model: CDGNet) -> Tensor:
    return model.encoder(image)


def large_decoder_forward(f_att: Tensor, model: CDGNet) -> tuple[Tensor, Tensor]:
    return model.large_decoder(f_att)


def small_decoder_forward(f_att: Tensor, model: CDGNet) -> tuple[Tensor, Tensor]:
    return model.small_decoder(f_att)


def off_fuse(l_out: Tensor, s_out: Tensor, model: CDGNet) -> Tensor:
    return model.fusion(l_out, s_out)


def cdgnet_forward(blurry: Tensor, model: CDGNet) -> DeblurOutput:
    return model(blurry)


BYTES_PER_ELEMENT = 4


def parameter_ledger(module: Module) -> list[tuple[str, int]]:
    """Построчная ведомость: имя параметра и число обучаемых элементов (маскированные тапы не считаются)."""
    return [(name, param.trainable_size) for name, param in module.named_parameters()]


def param_count(module: Module) -> int:
    """Размер модели в байтах при 32-битном хранении."""
    return sum(count for _, count in parameter_ledger(module)) * BYTES_PER_ELEMENT
