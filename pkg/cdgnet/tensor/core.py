"""Плотный тензор и обратный проход: граф записей в порядке исполнения и аддитивное накопление градиентов."""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from cdgnet.errors import ContractError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_sequence = itertools.count()
_precision = threading.local()


def default_dtype() -> np.dtype:
    """Текущая точность: float32 для обучения, float64 только для проверок градиентов."""
    return getattr(_precision, "dtype", np.dtype(np.float32))


@contextmanager
def precision(dtype) -> Iterator[np.dtype]:
    """Временно переключаем точность по умолчанию для всего, что создаётся внутри блока."""
    previous = default_dtype()
    _precision.dtype = np.dtype(dtype)
    try:
        yield _precision.dtype
    finally:
        _precision.dtype = previous


@dataclass(slots=True)
class Node:
    """Запись об одной выполненной примитивной операции."""

    op: str
    inputs: tuple["Tensor", ...]
    backward_fn: BackwardFn
    seq: int


class Tensor:
    """Массив (N, C, H, W) в row-major плюс опциональный градиент и ссылка на узел графа."""

    __slots__ = ("data", "grad", "node", "requires_grad", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype=None,
    ) -> None:
        if dtype is not None:
            array = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
            array = data
        else:
            array = np.asarray(data, dtype=default_dtype())
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __add__(self, other):
        from cdgnet.tensor import ops

        return ops.ewise(self, _lift(other, self), "add")

    def __radd__(self, other):
        from cdgnet.tensor import ops

        return ops.ewise(_lift(other, self), self, "add")

    def __sub__(self, other):
        from cdgnet.tensor import ops

        return ops.ewise(self, _lift(other, self), "sub")

    def __rsub__(self, other):
        from cdgnet.tensor import ops

        return ops.ewise(_lift(other, self), self, "sub")

    def __mul__(self, other):
        from cdgnet.tensor import ops

        if isinstance(other, Tensor):
            return ops.ewise(self, other, "mul")
        return ops.scale(self, float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        from cdgnet.tensor import ops

        if isinstance(other, Tensor):
            return ops.ewise(self, other, "div")
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self):
        from cdgnet.tensor import ops

        return ops.scale(self, -1.0)


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full((1,) * like.data.ndim, value, dtype=like.dtype))


def grad_enabled() -> bool:
    return getattr(_precision, "grad", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Инференс без записи графа: узлы не создаются, память не копится."""
    previous = grad_enabled()
    _precision.grad = False
    try:
        yield
    finally:
        _precision.grad = previous


def make_result(
    data: np.ndarray,
    inputs: Sequence[Tensor],
    backward_fn: BackwardFn,
    op: str,
) -> Tensor:
    """Оборачиваем результат ядра в тензор и регистрируем узел, если кому-то нужен градиент."""
    out = Tensor(data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op=op, inputs=tuple(inputs), backward_fn=backward_fn, seq=next(_sequence))
    return out


@dataclass(slots=True)
class Graph:
    """Упорядоченный по исполнению список тензоров-результатов, достижимых из выхода."""

    records: list[Tensor]

    @classmethod
    def trace(cls, output: Tensor) -> "Graph":
        seen: set[int] = set()
        found: list[Tensor] = []
        stack = [output]
        while stack:
            tensor = stack.pop()
            if id(tensor) in seen or tensor.node is None:
                continue
            seen.add(id(tensor))
            found.append(tensor)
            stack.extend(tensor.node.inputs)
        found.sort(key=lambda t: t.node.seq)
        return cls(records=found)

    def ops(self) -> list[str]:
        return [t.node.op for t in self.records]

    def __len__(self) -> int:
        return len(self.records)


def backward(loss: Tensor, parameters: Optional[Iterable[Tensor]] = None) -> Graph:
    """Проходим граф строго в обратном порядке исполнения и складываем градиенты в `.grad`.

    Градиенты переданных параметров сначала обнуляются, поэтому недостижимые
    параметры после вызова честно содержат нули.
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a single-element loss, got shape {loss.shape}")
    if loss.node is None:
        raise ContractError("backward() called on a tensor without a graph node")

    for param in parameters or ():
        param.grad = np.zeros_like(param.data)

    graph = Graph.trace(loss)
    for tensor in graph.records:
        tensor.grad = None
    loss.grad = np.ones_like(loss.data)

    for tensor in reversed(graph.records):
        upstream = tensor.grad
        if upstream is None:
            continue
        grads = tensor.node.backward_fn(upstream)
        for source, grad in zip(tensor.node.inputs, grads):
            if grad is None or not source.requires_grad:
                continue
            grad = np.asarray(grad, dtype=source.dtype)
            if grad.shape != source.shape:
                raise ContractError(
                    f"op {tensor.node.op} produced grad of shape {grad.shape} for input {source.shape}"
                )
            source.grad = grad if source.grad is None else source.grad + grad
    return graph
