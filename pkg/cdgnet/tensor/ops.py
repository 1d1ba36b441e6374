"""Дифференцируемые примитивы поверх numpy: свёртки через im2col, активации, пулинг, конкатенация, поэлементные операции."""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from cdgnet.errors import ContractError, DimensionError
from cdgnet.tensor.core import Tensor, make_result

Padding = Union[int, tuple[int, int]]

AXIS_NAMES = ("batch", "channel", "height", "width")


def _pair(value: Padding) -> tuple[int, int]:
    if isinstance(value, tuple):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _require_rank4(t: Tensor, label: str) -> None:
    if t.data.ndim != 4:
        raise DimensionError(f"{label} must be 4-D (N, C, H, W), got shape {t.shape}", axis="rank")


def _out_extent(size: int, kernel: int, stride: int, pad: int, axis: str) -> int:
    span = size + 2 * pad - kernel
    if span < 0:
        raise DimensionError(
            f"{axis} extent {size} is smaller than kernel {kernel} with pad {pad}", axis=axis
        )
    return span // stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    view = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return view[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def _conv_forward(xp: np.ndarray, w: np.ndarray, stride: int, ho: int, wo: int) -> np.ndarray:
    kh, kw = w.shape[2:]
    cols = _windows(xp, kh, kw, stride, ho, wo)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_grad_weight(xp: np.ndarray, g: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    ho, wo = g.shape[2:]
    cols = _windows(xp, kh, kw, stride, ho, wo)
    return np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))


def _conv_grad_input(
    g: np.ndarray, w: np.ndarray, padded_shape: tuple[int, ...], stride: int
) -> np.ndarray:
    kh, kw = w.shape[2:]
    ho, wo = g.shape[2:]
    dcols = np.tensordot(g, w, axes=([1], [0]))
    dxp = np.zeros(padded_shape, dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + (ho - 1) * stride + 1 : stride, j : j + (wo - 1) * stride + 1 : stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return dxp


def _unpad(a: np.ndarray, ph: int, pw: int) -> np.ndarray:
    h, w = a.shape[2:]
    return a[:, :, ph : h - ph, pw : w - pw]


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride: int = 1,
    pad: Padding = 0,
) -> Tensor:
    """Прямая кросс-корреляция плюс смещение; выход (N, Cout, H', W') с H' = (H + 2p - kh) // s + 1."""
    _require_rank4(x, "conv2d input")
    _require_rank4(w, "conv2d weight")
    if stride < 1:
        raise ContractError(f"conv2d stride must be >= 1, got {stride}")
    ph, pw = _pair(pad)
    if ph < 0 or pw < 0:
        raise ContractError(f"conv2d pad must be >= 0, got {pad}")
    cout, cin, kh, kw = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"conv2d expects odd kernel extents, got {kh}x{kw}")
    if x.shape[1] != cin:
        raise DimensionError(
            f"conv2d input has {x.shape[1]} channels, weight expects {cin}", axis="channel"
        )
    if b is not None and b.shape != (cout,):
        raise DimensionError(f"conv2d bias shape {b.shape} does not match {cout} outputs", axis="bias")

    n, _, h, wd = x.shape
    ho = _out_extent(h, kh, stride, ph, "height")
    wo = _out_extent(wd, kw, stride, pw, "width")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = _conv_forward(xp, w.data, stride, ho, wo)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward_fn(g: np.ndarray):
        dx = _unpad(_conv_grad_input(g, w.data, xp.shape, stride), ph, pw) if x.requires_grad else None
        dw = _conv_grad_weight(xp, g, kh, kw, stride) if w.requires_grad else None
        if b is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2, 3))

    inputs = (x, w) if b is None else (x, w, b)
    return make_result(out, inputs, backward_fn, "conv2d")


def conv_transpose2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride: int = 1,
    pad: Padding = 0,
) -> Tensor:
    """Транспонированная свёртка, вес (Cin, Cout, kh, kw); выход (H - 1) * s - 2p + kh."""
    _require_rank4(x, "conv_transpose2d input")
    _require_rank4(w, "conv_transpose2d weight")
    if stride not in (1, 2):
        raise ContractError(f"conv_transpose2d supports stride 1 or 2, got {stride}")
    ph, pw = _pair(pad)
    if ph < 0 or pw < 0:
        raise ContractError(f"conv_transpose2d pad must be >= 0, got {pad}")
    cin, cout, kh, kw = w.shape
    if x.shape[1] != cin:
        raise DimensionError(
            f"conv_transpose2d input has {x.shape[1]} channels, weight expects {cin}", axis="channel"
        )
    if b is not None and b.shape != (cout,):
        raise DimensionError(
            f"conv_transpose2d bias shape {b.shape} does not match {cout} outputs", axis="bias"
        )

    n, _, h, wd = x.shape
    padded = (n, cout, (h - 1) * stride + kh, (wd - 1) * stride + kw)
    if padded[2] - 2 * ph < 1 or padded[3] - 2 * pw < 1:
        raise DimensionError(f"conv_transpose2d pad {pad} leaves an empty output", axis="height")
    full = _conv_grad_input(x.data, w.data, padded, stride)
    out = np.ascontiguousarray(_unpad(full, ph, pw))
    if b is not None:
        out += b.data[None, :, None, None]

    def backward_fn(g: np.ndarray):
        gp = np.pad(g, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        dx = _conv_forward(gp, w.data, stride, h, wd) if x.requires_grad else None
        dw = _conv_grad_weight(gp, x.data, kh, kw, stride) if w.requires_grad else None
        if b is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2, 3))

    inputs = (x, w) if b is None else (x, w, b)
    return make_result(out, inputs, backward_fn, "conv_transpose2d")


def activation(x: Tensor, kind: str) -> Tensor:
    """Поэлементная ReLU (субградиент 0 в нуле) или сигмоида."""
    if kind == "relu":
        out = np.maximum(x.data, 0)

        def backward_fn(g: np.ndarray):
            return (g * (x.data > 0),)

        return make_result(out, (x,), backward_fn, "relu")
    if kind == "sigmoid":
        out = expit(x.data)

        def backward_fn(g: np.ndarray):
            return (g * out * (1 - out),)

        return make_result(out, (x,), backward_fn, "sigmoid")
    raise ContractError(f"unknown activation kind {kind!r}")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def absolute(x: Tensor) -> Tensor:
    out = np.abs(x.data)

    def backward_fn(g: np.ndarray):
        return (g * np.sign(x.data),)

    return make_result(out, (x,), backward_fn, "abs")


def global_avg_pool(x: Tensor) -> Tensor:
    _require_rank4(x, "global_avg_pool input")
    h, w = x.shape[2:]
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def backward_fn(g: np.ndarray):
        return (np.broadcast_to(g / (h * w), x.shape),)

    return make_result(out, (x,), backward_fn, "global_avg_pool")


def concat(xs: Sequence[Tensor]) -> Tensor:
    """Склейка по оси каналов; остальные оси обязаны совпадать."""
    xs = tuple(xs)
    if not xs:
        raise ContractError("concat needs at least one tensor")
    first = xs[0]
    for t in xs:
        _require_rank4(t, "concat input")
        for axis in (0, 2, 3):
            if t.shape[axis] != first.shape[axis]:
                raise DimensionError(
                    f"concat {AXIS_NAMES[axis]} extent {t.shape[axis]} != {first.shape[axis]}",
                    axis=AXIS_NAMES[axis],
                )
    if len(xs) == 1:
        return first
    out = np.concatenate([t.data for t in xs], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])

    def backward_fn(g: np.ndarray):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(xs)))

    return make_result(out, tuple(xs), backward_fn, "concat")


def _broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    if len(a) != len(b):
        raise DimensionError(f"rank mismatch {a} vs {b}", axis="rank")
    shape = []
    for i, (da, db) in enumerate(zip(a, b)):
        if da != db and da != 1 and db != 1:
            name = AXIS_NAMES[i] if len(a) == 4 else f"axis{i}"
            raise DimensionError(f"extents {da} and {db} are not broadcastable", axis=name)
        shape.append(max(da, db))
    return tuple(shape)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def ewise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    """Поэлементные mul/add/sub/div с broadcast только по единичным осям."""
    _broadcast_shape(a.shape, b.shape)
    if kind == "mul":
        out = a.data * b.data

        def backward_fn(g: np.ndarray):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    elif kind == "add":
        out = a.data + b.data

        def backward_fn(g: np.ndarray):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    elif kind == "sub":
        out = a.data - b.data

        def backward_fn(g: np.ndarray):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    elif kind == "div":
        out = a.data / b.data

        def backward_fn(g: np.ndarray):
            return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    else:
        raise ContractError(f"unknown elementwise kind {kind!r}")
    return make_result(out, (a, b), backward_fn, kind)


def scale(x: Tensor, factor: float) -> Tensor:
    out = x.data * x.dtype.type(factor)

    def backward_fn(g: np.ndarray):
        return (g * x.dtype.type(factor),)

    return make_result(out, (x,), backward_fn, "scale")


def reduce_sum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def backward_fn(g: np.ndarray):
        return (np.broadcast_to(g, x.shape),)

    return make_result(out, (x,), backward_fn, "sum")


def mean(x: Tensor) -> Tensor:
    count = x.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)

    def backward_fn(g: np.ndarray):
        return (np.broadcast_to(g / count, x.shape),)

    return make_result(out, (x,), backward_fn, "mean")
