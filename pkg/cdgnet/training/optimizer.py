"""Adam с коррекцией смещения и ступенчатое расписание learning rate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from cdgnet.errors import NonFiniteError, ScheduleError
from cdgnet.nn.module import Parameter

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass(slots=True)
class Schedule:
    base_lr: float = 1e-4
    decay: float = 0.5
    step_size: int = 500
    total_epochs: int = 3000

    def lr_at(self, epoch: int) -> float:
        """lr(e) = base_lr · decay^floor(e / step_size)."""
        if epoch < 0:
            raise ScheduleError(f"epoch must be >= 0, got {epoch}", key="epoch")
        return self.base_lr * self.decay ** (epoch // self.step_size)


def lr_at(epoch: int, schedule: Schedule | None = None) -> float:
    return (schedule or Schedule()).lr_at(epoch)


@dataclass(slots=True)
class AdamState:
    """Моменты по каждому параметру (в том же порядке) и счётчик шагов."""

    first: list[np.ndarray] = field(default_factory=list)
    second: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_parameters(cls, params: Sequence[Parameter]) -> "AdamState":
        return cls(
            first=[np.zeros_like(p.data) for p in params],
            second=[np.zeros_like(p.data) for p in params],
            step=0,
        )


def adam_step(params: Sequence[Parameter], state: AdamState, lr: float) -> AdamState:
    """Один шаг Adam; после обновления замаскированные тапы принудительно обнуляются.

    Все градиенты проверяются до того, как хоть один параметр изменится.
    """
    for param in params:
        if param.grad is None or not np.all(np.isfinite(param.grad)):
            raise NonFiniteError(f"gradient of {param.name} is missing or non-finite", name=param.name or "?")

    state.step += 1
    t = state.step
    correction1 = 1 - BETA1**t
    correction2 = 1 - BETA2**t
    for param, m, v in zip(params, state.first, state.second):
        g = param.grad
        m *= BETA1
        m += (1 - BETA1) * g
        v *= BETA2
        v += (1 - BETA2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        update = lr * m_hat / (np.sqrt(v_hat) + EPSILON)
        param.data = (param.data - update).astype(param.dtype, copy=False)
        if param.mask is not None:
            param.data *= param.mask
    return state

