"""Параметры, базовый модуль и обычные свёрточные слои."""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from cdgnet.tensor import Tensor, conv2d, conv_transpose2d, default_dtype, ewise


class Parameter(Tensor):
    """Обучаемый тензор; `mask` (0/1 той же формы) фиксирует позиции, которые навсегда остаются нулём."""

    __slots__ = ("mask",)

    def __init__(self, data: np.ndarray, name: Optional[str] = None, mask: Optional[np.ndarray] = None) -> None:
        super().__init__(np.array(data, dtype=default_dtype(), order="C"), requires_grad=True, name=name)
        self.mask = None if mask is None else np.asarray(mask, dtype=self.dtype)
        if self.mask is not None:
            self.data *= self.mask

    @property
    def trainable_size(self) -> int:
        if self.mask is None:
            return self.size
        return int(np.count_nonzero(self.mask))

    def effective(self) -> Tensor:
        """Вес с наложенной маской: градиент в замаскированные позиции не течёт."""
        if self.mask is None:
            return self
        return ewise(self, Tensor(self.mask.astype(self.dtype)), "mul")


class Module:
    """Минимальный nn.Module: параметры собираются обходом атрибутов в порядке объявления."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            yield from _walk(value, f"{prefix}{attr}")

    def parameters(self) -> list[Parameter]:
        return [param for _, param in self.named_parameters()]

    def name_parameters(self) -> None:
        for name, param in self.named_parameters():
            param.name = name

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = np.zeros_like(param.data)

    def astype(self, dtype) -> "Module":
        """Переводим все параметры в другую точность (64 бита нужны только для проверок)."""
        for param in self.parameters():
            param.data = param.data.astype(dtype)
            if param.mask is not None:
                param.mask = param.mask.astype(dtype)
            param.grad = None
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def _walk(value, path: str) -> Iterator[tuple[str, Parameter]]:
    # списки уровней могут быть вложенными: deforms.1.2.weight
    if isinstance(value, Parameter):
        yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{path}.")
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            yield from _walk(item, f"{path}.{index}")


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float = 1.0) -> np.ndarray:
    std = gain * math.sqrt(2.0 / max(1, fan_in))
    return rng.normal(0.0, std, size=shape)


class Conv2d(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        cin: int,
        cout: int,
        kernel: tuple[int, int] | int = 3,
        stride: int = 1,
        mask: Optional[np.ndarray] = None,
        zero: bool = False,
    ) -> None:
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        shape = (cout, cin, kh, kw)
        taps = kh * kw if mask is None else int(np.count_nonzero(mask))
        weight = np.zeros(shape) if zero else he_normal(rng, shape, cin * taps)
        full_mask = None if mask is None else np.broadcast_to(mask, shape)
        self.weight = Parameter(weight, mask=full_mask)
        self.bias = Parameter(np.zeros(cout))
        self.stride = stride
        self.pad = (kh // 2, kw // 2)

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight.effective(), self.bias, self.stride, self.pad)


class ConvTranspose2d(Module):
    """Повышающая ×2 транспонированная свёртка: ядро 4, шаг 2, паддинг 1."""

    def __init__(self, rng: np.random.Generator, cin: int, cout: int, kernel: int = 4, stride: int = 2, pad: int = 1) -> None:
        self.weight = Parameter(he_normal(rng, (cin, cout, kernel, kernel), cin * kernel * kernel // (stride * stride)))
        self.bias = Parameter(np.zeros(cout))
        self.stride = stride
        self.pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return conv_transpose2d(x, self.weight, self.bias, self.stride, self.pad)
