"""Деформируемая свёртка 3×3 (шаг 1, паддинг 1) с билинейной выборкой и полным обратным проходом."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from cdgnet.errors import DimensionError
from cdgnet.nn.module import Conv2d, Module, Parameter, he_normal
from cdgnet.tensor import Tensor
from cdgnet.tensor.core import make_result

KERNEL = 3
TAPS = KERNEL * KERNEL


@dataclass(slots=True)
class _Corner:
    index: np.ndarray
    weight: np.ndarray
    dwdy: np.ndarray
    dwdx: np.ndarray


def _corners(py: np.ndarray, px: np.ndarray, height: int, width: int) -> list[_Corner]:
    """Четыре целочисленных соседа точки: плоский индекс, билинейный вес (0 вне картинки) и его производные."""
    y0 = np.floor(py)
    x0 = np.floor(px)
    ly = py - y0
    lx = px - x0
    hy = 1 - ly
    hx = 1 - lx
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    corners = []
    for dy, dx, weight, dwdy, dwdx in (
        (0, 0, hy * hx, -hx, -hy),
        (0, 1, hy * lx, -lx, hy),
        (1, 0, ly * hx, hx, -ly),
        (1, 1, ly * lx, lx, ly),
    ):
        yc = y0 + dy
        xc = x0 + dx
        inside = (yc >= 0) & (yc < height) & (xc >= 0) & (xc < width)
        index = np.where(inside, yc * width + xc, 0)
        corners.append(
            _Corner(
                index=index,
                weight=np.where(inside, weight, 0),
                dwdy=np.where(inside, dwdy, 0),
                dwdx=np.where(inside, dwdx, 0),
            )
        )
    return corners


def bilinear_sample(feat: np.ndarray, y: float, x: float, n: int, c: int) -> float:
    """Значение карты признаков в дробной точке (y, x); соседи вне [0,H)×[0,W) дают ноль."""
    feat = feat.data if isinstance(feat, Tensor) else np.asarray(feat)
    height, width = feat.shape[2:]
    plane = feat[n, c].reshape(-1)
    total = 0.0
    for corner in _corners(np.asarray(float(y)), np.asarray(float(x)), height, width):
        total += float(corner.weight) * float(plane[int(corner.index)])
    return total


def _sampling_grid(offset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Координаты выборки p0 + pn + Δp формы (N, 9, H, W); смещения чередуются (Δy, Δx) по тапам."""
    n, _, height, width = offset.shape
    taps = np.arange(TAPS)
    ky = (taps // KERNEL - KERNEL // 2)[None, :, None, None]
    kx = (taps % KERNEL - KERNEL // 2)[None, :, None, None]
    hh = np.arange(height)[None, None, :, None]
    ww = np.arange(width)[None, None, None, :]
    py = hh + ky + offset[:, 0::2].astype(np.float64)
    px = ww + kx + offset[:, 1::2].astype(np.float64)
    return py, px


def _gather(x: np.ndarray, corners: list[_Corner]) -> list[np.ndarray]:
    n, c, height, width = x.shape
    flat = x.reshape(n, c, height * width)
    values = []
    for corner in corners:
        index = corner.index.reshape(n, 1, -1)
        values.append(np.take_along_axis(flat, index, axis=2).reshape(n, c, TAPS, height, width))
    return values


def deform_conv2d_op(x: Tensor, offset: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """out(p0) = Σ_n w(pn) · x(p0 + pn + Δpn) + b; градиенты текут в x, смещения, вес и смещение."""
    if x.data.ndim != 4 or offset.data.ndim != 4:
        raise DimensionError("deform_conv2d expects 4-D input and offsets", axis="rank")
    n, cin, height, width = x.shape
    cout = weight.shape[0]
    if weight.shape != (cout, cin, KERNEL, KERNEL):
        raise DimensionError(
            f"deform_conv2d weight {weight.shape} does not match {cin} input channels", axis="channel"
        )
    if offset.shape != (n, 2 * TAPS, height, width):
        axis = "channel" if offset.shape[1] != 2 * TAPS else "height"
        raise DimensionError(
            f"deform_conv2d offsets {offset.shape} != {(n, 2 * TAPS, height, width)}", axis=axis
        )

    dtype = x.dtype
    py, px = _sampling_grid(offset.data)
    corners = _corners(py, px, height, width)
    values = _gather(x.data, corners)
    cols = sum(
        value * corner.weight[:, None].astype(dtype) for value, corner in zip(values, corners)
    )
    w2 = weight.data.reshape(cout, cin, TAPS)
    out = np.tensordot(cols, w2, axes=([1, 2], [1, 2])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward_fn(g: np.ndarray):
        dweight = np.tensordot(g, cols, axes=([0, 2, 3], [0, 3, 4])).reshape(weight.shape)
        dcols = np.tensordot(w2, g, axes=([0], [1])).transpose(2, 0, 1, 3, 4)

        dx = None
        if x.requires_grad:
            plane = height * width
            base = (np.arange(n)[:, None] * cin + np.arange(cin)[None, :]) * plane
            accum = np.zeros(n * cin * plane)
            for corner in corners:
                index = base[:, :, None, None, None] + corner.index[:, None]
                contrib = dcols * corner.weight[:, None]
                accum += np.bincount(index.reshape(-1), weights=contrib.reshape(-1), minlength=accum.size)
            dx = accum.reshape(x.shape)

        doffset = None
        if offset.requires_grad:
            current = _gather(x.data, corners)
            gy = np.zeros(py.shape)
            gx = np.zeros(px.shape)
            for value, corner in zip(current, corners):
                weighted = (dcols * value).sum(axis=1)
                gy += weighted * corner.dwdy
                gx += weighted * corner.dwdx
            doffset = np.empty(offset.shape)
            doffset[:, 0::2] = gy
            doffset[:, 1::2] = gx

        grads = [dx, doffset, dweight]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    inputs = (x, offset, weight) if bias is None else (x, offset, weight, bias)
    return make_result(out, inputs, backward_fn, "deform_conv2d")


class DeformConv2d(Module):
    """Деформируемый слой: смещения даёт обычная свёртка 3×3, стартующая с нулей (т.е. со стандартной свёртки)."""

    def __init__(self, rng: np.random.Generator, cin: int, cout: int) -> None:
        self.weight = Parameter(he_normal(rng, (cout, cin, KERNEL, KERNEL), cin * TAPS))
        self.bias = Parameter(np.zeros(cout))
        self.offset_conv = Conv2d(rng, cin, 2 * TAPS, KERNEL, zero=True)

    def offsets(self, x: Tensor) -> Tensor:
        return self.offset_conv(x)

    def forward(self, x: Tensor) -> Tensor:
        return deform_conv2d_op(x, self.offsets(x), self.weight, self.bias)


def deform_conv2d(x: Tensor, layer: DeformConv2d) -> Tensor:
    return layer(x)
