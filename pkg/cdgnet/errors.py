"""Единая иерархия исключений: библиотека только бросает, в коды выхода их переводит CLI."""

from __future__ import annotations

from pathlib import Path
from typing import Optional


class CDGNetError(Exception):
    """Базовая ошибка пакета: всё, что мы бросаем сами, наследуется от неё."""


class DimensionError(CDGNetError):
    """Размерности тензоров не сошлись; в `axis` лежит ось, на которой споткнулись."""

    def __init__(self, message: str, axis: Optional[str] = None) -> None:
        super().__init__(message)
        self.axis = axis


class ContractError(CDGNetError):
    """Нарушено предусловие операции (например, backward от не-скаляра)."""


class ConfigError(CDGNetError):
    def __init__(self, message: str, key: Optional[str] = None) -> None:
        super().__init__(message)
        self.key = key


class ScheduleError(ConfigError, ValueError):
    """Расписание спросили о недопустимой эпохе."""


class InputError(CDGNetError):
    """Входные данные не подходят: не делятся на 4, кроп больше картинки и т.п."""


class ImageFormatError(InputError):
    pass


class CheckpointError(CDGNetError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointFormatError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    def __init__(self, message: str, name: str) -> None:
        super().__init__(message)
        self.name = name


class NonFiniteError(CDGNetError):
    """В градиенте или значении вылез NaN/inf; `name` подсказывает, где именно."""

    def __init__(self, message: str, name: str) -> None:
        super().__init__(message)
        self.name = name


class TrainingDivergedError(CDGNetError):
    """Лосс ушёл в бесконечность; последний нормальный чекпоинт уже сброшен на диск."""

    def __init__(self, message: str, checkpoint_path: Optional[Path] = None) -> None:
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class GradCheckError(CDGNetError):
    pass
