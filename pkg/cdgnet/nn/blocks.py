"""Переиспользуемые блоки: ResBlock, residual dense block, канальное и пространственное внимание, ACDA."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from cdgnet.errors import ConfigError
from cdgnet.nn.deform import DeformConv2d
from cdgnet.nn.module import Conv2d, Module
from cdgnet.tensor import Tensor, concat, ewise, global_avg_pool, relu, sigmoid

ATTENTION_MODES = ("full", "channel", "spatial", "none")


class ResBlock(Module):
    """x + conv(relu(conv(x))); `hidden` позволяет сделать узкое горлышко внутри, каналы на выходе те же."""

    def __init__(self, rng: np.random.Generator, width: int, hidden: Optional[int] = None) -> None:
        hidden = hidden or width
        self.conv1 = Conv2d(rng, width, hidden, 3)
        self.conv2 = Conv2d(rng, hidden, width, 3)

    def branch(self, x: Tensor) -> Tensor:
        return self.conv2(relu(self.conv1(x)))

    def forward(self, x: Tensor) -> Tensor:
        return x + self.branch(x)


class RDB(Module):
    """Четыре плотно связанные свёртки 3×3 (три ReLU), локальное слияние 1×1 и остаточная связь."""

    LAYERS = 4

    def __init__(self, rng: np.random.Generator, width: int, growth: Optional[int] = None) -> None:
        self.width = width
        self.growth = growth or max(1, width // 2)
        self.layers = [
            Conv2d(rng, width + i * self.growth, self.growth, 3) for i in range(self.LAYERS)
        ]
        self.fusion = Conv2d(rng, width + self.LAYERS * self.growth, width, 1)

    def layer_inputs(self) -> list[int]:
        return [layer.weight.shape[1] for layer in self.layers]

    def forward(self, x: Tensor) -> Tensor:
        features = [x]
        for index, layer in enumerate(self.layers):
            out = layer(concat(features))
            if index < self.LAYERS - 1:
                out = relu(out)
            features.append(out)
        return x + self.fusion(concat(features))


class ChannelAttention(Module):
    """M_c = σ(c1(AvgPool(F))): только среднее, без max-пулинга."""

    def __init__(self, rng: np.random.Generator, channels: int, reduction: int) -> None:
        if reduction < 1 or channels % reduction:
            raise ConfigError(
                f"channels {channels} must be divisible by reduction ratio {reduction}",
                key="reduction_ratio",
            )
        self.squeeze = Conv2d(rng, channels, channels // reduction, 1)
        self.excite = Conv2d(rng, channels // reduction, channels, 1)

    def forward(self, f: Tensor) -> Tensor:
        return sigmoid(self.excite(relu(self.squeeze(global_avg_pool(f)))))


class SpatialAttention(Module):
    """M_s = σ(c2(F)): свёртка C→C/4, два ResBlock, деформируемая свёртка, свёртка в один канал."""

    def __init__(self, rng: np.random.Generator, channels: int) -> None:
        inner = max(1, channels // 4)
        self.entry = Conv2d(rng, channels, inner, 3)
        self.blocks = [ResBlock(rng, inner), ResBlock(rng, inner)]
        self.deform = DeformConv2d(rng, inner, inner)
        self.head = Conv2d(rng, inner, 1, 3)

    def forward(self, f: Tensor) -> Tensor:
        out = self.entry(f)
        for block in self.blocks:
            out = block(out)
        out = self.deform(out)
        return sigmoid(self.head(out))


@dataclass(slots=True)
class AttentionMaps:
    channel: Optional[Tensor]
    spatial: Optional[Tensor]


class ACDA(Module):
    """F_att = F_E ⊙ M_c ⊙ M_s + F_E; в режимах абляции одна или обе карты выключаются."""

    def __init__(self, rng: np.random.Generator, channels: int, reduction: int, mode: str = "full") -> None:
        if mode not in ATTENTION_MODES:
            raise ConfigError(f"unknown attention mode {mode!r}", key="attention")
        self.mode = mode
        self.channel = ChannelAttention(rng, channels, reduction) if mode in ("full", "channel") else None
        self.spatial = SpatialAttention(rng, channels) if mode in ("full", "spatial") else None

    def attend(self, f: Tensor) -> tuple[Tensor, AttentionMaps]:
        if self.mode == "none":
            return f, AttentionMaps(None, None)
        gated = f
        m_c = m_s = None
        if self.channel is not None:
            m_c = self.channel(f)
            gated = ewise(gated, m_c, "mul")
        if self.spatial is not None:
            m_s = self.spatial(gated)
            gated = ewise(gated, m_s, "mul")
        return gated + f, AttentionMaps(m_c, m_s)

    def forward(self, f: Tensor) -> Tensor:
        return self.attend(f)[0]


def resblock_forward(x: Tensor, block: ResBlock) -> Tensor:
    return block(x)


def rdb_forward(x: Tensor, block: RDB) -> Tensor:
    return block(x)


def channel_attention(f: Tensor, module: ChannelAttention) -> Tensor:
    return module(f)


def spatial_attention(f_scaled: Tensor, module: SpatialAttention) -> Tensor:
    return module(f_scaled)


def acda_forward(f_e: Tensor, module: ACDA) -> Tensor:
    return module(f_e)
