"""Сверка аналитических градиентов с центральными конечными разностями в 64-битном режиме."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from cdgnet.errors import ContractError, GradCheckError
from cdgnet.tensor.core import Tensor, backward

ProbeFilter = Callable[[Tensor, int], bool]


@dataclass(slots=True)
class GradCheckReport:
    max_rel_err: float
    worst: str
    probes: int


def _probe_indices(
    param: Tensor, limit: Optional[int], rng: np.random.Generator
) -> np.ndarray:
    if limit is None or param.size <= limit:
        return np.arange(param.size)
    return np.sort(rng.choice(param.size, size=limit, replace=False))


def grad_check_report(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    probes_per_tensor: Optional[int] = None,
    seed: int = 0,
    probe_filter: Optional[ProbeFilter] = None,
) -> GradCheckReport:
    """Считаем max |analytic - numeric| / max(1, |analytic|) по всем пробам всех параметров.

    `f` каждый раз заново строит граф из текущих `param.data`, поэтому пробы
    меняют данные на месте и возвращают их обратно.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ContractError(f"grad_check eps must lie in [1e-6, 1e-3], got {eps}")
    for param in params:
        if param.dtype != np.float64:
            raise ContractError(
                f"grad_check needs 64-bit tensors, {param.name or 'parameter'} is {param.dtype}"
            )
        if not (param.data.flags.c_contiguous and param.data.flags.writeable):
            param.data = np.array(param.data, order="C")

    loss = f()
    backward(loss, params)
    analytic = [param.grad.copy() for param in params]
    rng = np.random.default_rng(seed)

    worst_err = 0.0
    worst = ""
    probes = 0
    for number, (param, grad) in enumerate(zip(params, analytic)):
        label = param.name or f"param{number}"
        flat = param.data.reshape(-1)
        for index in _probe_indices(param, probes_per_tensor, rng):
            if probe_filter is not None and not probe_filter(param, int(index)):
                continue
            original = flat[index]
            flat[index] = original + eps
            plus = f().item()
            flat[index] = original - eps
            minus = f().item()
            flat[index] = original
            if not (math.isfinite(plus) and math.isfinite(minus)):
                raise GradCheckError(f"non-finite loss while probing {label}[{index}]")
            a = float(grad.reshape(-1)[index])
            if not math.isfinite(a):
                raise GradCheckError(f"non-finite analytic gradient at {label}[{index}]")
            numeric = (plus - minus) / (2 * eps)
            err = abs(a - numeric) / max(1.0, abs(a))
            probes += 1
            if err > worst_err or not worst:
                worst_err, worst = err, f"{label}[{index}]"
    return GradCheckReport(max_rel_err=worst_err, worst=worst, probes=probes)


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    **kwargs,
) -> float:
    return grad_check_report(f, params, eps, **kwargs).max_rel_err


def away_from_kinks(eps: float) -> ProbeFilter:
    """Фильтр проб для кусочно-линейных входов: пропускаем всё, что ближе 10·eps к нулю."""

    def accept(param: Tensor, index: int) -> bool:
        return abs(float(param.data.reshape(-1)[index])) > 10 * eps

    return accept
