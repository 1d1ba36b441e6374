"""Набор проверок градиентов по каждой дифференцируемой операции и блоку, в 64 битах.

Выход каждой проверки сворачивается в скаляр взвешенной суммой со случайными
коэффициентами, чтобы ошибка в любой позиции выхода была видна.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from cdgnet.config import Config
from cdgnet.errors import ConfigError
from cdgnet.models.network import CDGNet, LargeDecoder, OFFModule, SmallDecoder
from cdgnet.nn.blocks import ACDA, RDB, ChannelAttention, ResBlock, SpatialAttention
from cdgnet.nn.deform import DeformConv2d
from cdgnet.nn.module import Module
from cdgnet.tensor import (
    GradCheckReport,
    Tensor,
    absolute,
    away_from_kinks,
    concat,
    conv2d,
    conv_transpose2d,
    ewise,
    global_avg_pool,
    grad_check_report,
    precision,
    reduce_sum,
    relu,
    sigmoid,
)
from cdgnet.training.supervision import LossWeights, loss_terms, ssim_loss

logger = logging.getLogger("cdgnet.gradcheck")

TOLERANCE = 1e-6
EPS = 1e-6
MODULE_PROBES = 6
NETWORK_PROBES = 1
BIAS_SCALE = 0.05


@dataclass(slots=True)
class Check:
    loss: Callable[[], Tensor]
    params: list[Tensor]
    probes_per_tensor: Optional[int] = None
    kinks: bool = False


@dataclass(slots=True)
class CheckResult:
    name: str
    report: GradCheckReport
    seconds: float

    @property
    def passed(self) -> bool:
        return self.report.max_rel_err <= TOLERANCE


def _leaf(rng: np.random.Generator, shape: tuple[int, ...], name: str, scale: float = 1.0) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True, name=name)


def _weighted(forward: Callable[[], Sequence[Tensor]], rng: np.random.Generator) -> Callable[[], Tensor]:
    shapes = [out.shape for out in forward()]
    weights = [Tensor(rng.normal(size=shape)) for shape in shapes]

    def loss() -> Tensor:
        total = None
        for out, weight in zip(forward(), weights):
            term = reduce_sum(ewise(out, weight, "mul"))
            total = term if total is None else total + term
        return total

    return loss


def _perturb_parameters(module: Module, rng: np.random.Generator) -> None:
    """Уводим точку проверки с изломов.

    Смещения деформируемых слоёв сдвигаются с целых позиций, где билинейная
    выборка не дифференцируема. Остальные bias получают малый случайный сдвиг:
    при нулевых bias мёртвые входы дают предактивации ReLU ровно в нуле, и
    центральная разность перешагивает излом.
    """
    for name, param in module.named_parameters():
        if name.endswith("offset_conv.weight"):
            param.data = rng.normal(0.0, 0.1, size=param.shape)
        elif name.endswith("offset_conv.bias"):
            param.data = rng.uniform(-0.5, 0.5, size=param.shape)
        elif name.endswith("bias"):
            param.data = rng.normal(0.0, BIAS_SCALE, size=param.shape)


def _module_check(module: Module, inputs: list[Tensor], rng, probes=MODULE_PROBES) -> Check:
    _perturb_parameters(module, rng)

    def forward() -> list[Tensor]:
        out = module(*inputs)
        return list(out) if isinstance(out, tuple) else [out]

    return Check(_weighted(forward, rng), [*inputs, *module.parameters()], probes)


def _conv2d(rng) -> Check:
    x = _leaf(rng, (2, 3, 7, 7), "x")
    w1 = _leaf(rng, (4, 3, 3, 3), "w1")
    b1 = _leaf(rng, (4,), "b1")
    w2 = _leaf(rng, (2, 3, 1, 3), "w2")
    return Check(
        _weighted(
            lambda: [
                conv2d(x, w1, b1, stride=1, pad=1),
                conv2d(x, w1, None, stride=2, pad=1),
                conv2d(x, w2, pad=(0, 1)),
            ],
            rng,
        ),
        [x, w1, b1, w2],
    )


def _conv_transpose2d(rng) -> Check:
    x = _leaf(rng, (1, 3, 3, 4), "x")
    w1 = _leaf(rng, (3, 2, 4, 4), "w1")
    b1 = _leaf(rng, (2,), "b1")
    w2 = _leaf(rng, (3, 2, 3, 3), "w2")
    return Check(
        _weighted(
            lambda: [
                conv_transpose2d(x, w1, b1, stride=2, pad=1),
                conv_transpose2d(x, w2, None, stride=1, pad=1),
            ],
            rng,
        ),
        [x, w1, b1, w2],
    )


def _relu(rng) -> Check:
    x = _leaf(rng, (2, 3, 4, 4), "x")
    return Check(_weighted(lambda: [relu(x)], rng), [x], kinks=True)


def _sigmoid(rng) -> Check:
    x = _leaf(rng, (2, 3, 4, 4), "x", scale=2.0)
    return Check(_weighted(lambda: [sigmoid(x)], rng), [x])


def _absolute(rng) -> Check:
    x = _leaf(rng, (2, 3, 4, 4), "x")
    return Check(_weighted(lambda: [absolute(x)], rng), [x], kinks=True)


def _global_avg_pool(rng) -> Check:
    x = _leaf(rng, (2, 3, 5, 4), "x")
    return Check(_weighted(lambda: [global_avg_pool(x)], rng), [x])


def _concat(rng) -> Check:
    a = _leaf(rng, (2, 2, 3, 3), "a")
    b = _leaf(rng, (2, 3, 3, 3), "b")
    return Check(_weighted(lambda: [concat([a, b, a])], rng), [a, b])


def _ewise(rng) -> Check:
    a = _leaf(rng, (2, 3, 4, 4), "a")
    b = _leaf(rng, (2, 3, 4, 4), "b")
    gate = _leaf(rng, (2, 3, 1, 1), "gate")
    plane = _leaf(rng, (2, 1, 4, 4), "plane")
    positive = Tensor(rng.uniform(0.5, 2.0, size=(2, 3, 4, 4)), requires_grad=True, name="positive")
    return Check(
        _weighted(
            lambda: [
                ewise(a, b, "mul"),
                ewise(a, gate, "mul"),
                ewise(a, plane, "mul"),
                ewise(a, b, "add"),
                ewise(a, gate, "sub"),
                ewise(a, positive, "div"),
            ],
            rng,
        ),
        [a, b, gate, plane, positive],
    )


def _deform_conv2d(rng) -> Check:
    layer = DeformConv2d(rng, 2, 3)
    return _module_check(layer, [_leaf(rng, (1, 2, 5, 5), "x")], rng, probes=None)


def _resblock(rng) -> Check:
    return _module_check(ResBlock(rng, 4), [_leaf(rng, (1, 4, 5, 5), "x")], rng)


def _rdb(rng) -> Check:
    return _module_check(RDB(rng, 4), [_leaf(rng, (1, 4, 5, 5), "x")], rng)


def _channel_attention(rng) -> Check:
    return _module_check(ChannelAttention(rng, 8, 4), [_leaf(rng, (2, 8, 3, 3), "f")], rng)


def _spatial_attention(rng) -> Check:
    return _module_check(SpatialAttention(rng, 8), [_leaf(rng, (1, 8, 4, 4), "f")], rng)


def _acda(rng) -> Check:
    return _module_check(ACDA(rng, 8, 4, "full"), [_leaf(rng, (1, 8, 4, 4), "f")], rng)


def _large_decoder(rng) -> Check:
    return _module_check(LargeDecoder(rng, 8, 4), [_leaf(rng, (1, 8, 2, 2), "f")], rng)


def _small_decoder(rng) -> Check:
    return _module_check(SmallDecoder(rng, 8, 4), [_leaf(rng, (1, 8, 2, 2), "f")], rng)


def _off(rng) -> Check:
    inputs = [_leaf(rng, (1, 4, 6, 6), "l_out"), _leaf(rng, (1, 4, 6, 6), "s_out")]
    return _module_check(OFFModule(rng, 4), inputs, rng)


def _ssim_loss(rng) -> Check:
    a = _leaf(rng, (1, 2, 6, 7), "a", scale=0.2)
    b = Tensor(rng.normal(0.0, 0.2, size=(1, 2, 6, 7)))
    return Check(lambda: ssim_loss(a, b), [a])


def toy_config() -> Config:
    return Config(channels=8, small_channels=4, reduction_ratio=4, crop=8)


def _total_loss(rng) -> Check:
    model = CDGNet(toy_config(), rng)
    _perturb_parameters(model, rng)
    blurry = Tensor(rng.uniform(-0.5, 0.5, size=(1, 3, 8, 8)))
    sharp = rng.uniform(-0.5, 0.5, size=(1, 3, 8, 8))
    mask = (rng.uniform(size=(1, 1, 8, 8)) > 0.5).astype(np.float64)
    weights = LossWeights()

    def loss() -> Tensor:
        out = model(blurry)
        l_img, s_img = out.branch_heads()
        return loss_terms(out.image, l_img, s_img, sharp, mask, weights).total

    return Check(loss, model.parameters(), NETWORK_PROBES)


SUITE: dict[str, Callable[[np.random.Generator], Check]] = {
    "conv2d": _conv2d,
    "conv_transpose2d": _conv_transpose2d,
    "relu": _relu,
    "sigmoid": _sigmoid,
    "abs": _absolute,
    "global_avg_pool": _global_avg_pool,
    "concat": _concat,
    "ewise": _ewise,
    "deform_conv2d": _deform_conv2d,
    "resblock": _resblock,
    "rdb": _rdb,
    "channel_attention": _channel_attention,
    "spatial_attention": _spatial_attention,
    "acda": _acda,
    "large_decoder": _large_decoder,
    "small_decoder": _small_decoder,
    "off": _off,
    "ssim_loss": _ssim_loss,
    "total_loss": _total_loss,
}


def run_check(name: str, seed: int = 0) -> CheckResult:
    if name not in SUITE:
        raise ConfigError(f"unknown gradcheck op {name!r}; known: {', '.join(SUITE)}", key="op")
    started = time.perf_counter()
    with precision(np.float64):
        rng = np.random.default_rng([seed, list(SUITE).index(name)])
        check = SUITE[name](rng)
        report = grad_check_report(
            check.loss,
            check.params,
            eps=EPS,
            probes_per_tensor=check.probes_per_tensor,
            seed=seed,
            probe_filter=away_from_kinks(EPS) if check.kinks else None,
        )
    result = CheckResult(name=name, report=report, seconds=time.perf_counter() - started)
    logger.info(
        "op=%s max_rel_err=%.3e worst=%s probes=%d seconds=%.2f",
        name,
        report.max_rel_err,
        report.worst,
        report.probes,
        result.seconds,
    )
    return result


def run_suite(names: Optional[Iterable[str]] = None, seed: int = 0) -> list[CheckResult]:
    return [run_check(name, seed) for name in (names or SUITE)]
