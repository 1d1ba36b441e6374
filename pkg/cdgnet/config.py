"""Конфигурация: файл key=value, проверенный pydantic-моделью, плюс настройки процесса из окружения."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cdgnet.errors import ConfigError

LOG_LEVEL = os.getenv("CDGNET_LOG_LEVEL", "INFO")
METRICS_PORT = os.getenv("CDGNET_METRICS_PORT")
SERVICE_NAME = os.getenv("OTEL_SERVICE_NAME", "cdgnet-train")


class Config(BaseModel):
    """Все ширины, глубины и гиперпараметры обучения; значения по умолчанию соответствуют полному протоколу обучения."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    channels: int = Field(128, ge=4)
    small_channels: int = Field(32, ge=1)
    reduction_ratio: int = Field(8, ge=1)
    mu: float = Field(0.96, ge=0.0, le=1.0)
    lambda1: float = Field(0.1, ge=0.0)
    lambda2: float = Field(0.1, ge=0.0)
    lr: float = Field(1e-4, gt=0.0)
    lr_decay: float = Field(0.5, gt=0.0, le=1.0)
    lr_step: int = Field(500, ge=1)
    epochs: int = Field(3000, ge=1)
    batch: int = Field(6, ge=1)
    crop: int = Field(256, ge=4)
    seed: int = 0
    init_seed: Optional[int] = None

    attention: Literal["full", "channel", "spatial", "none"] = "full"
    fusion: Literal["off", "concat"] = "off"
    encoder: Literal["rdb", "resblock"] = "rdb"
    rec_loss: Literal["l2", "l1", "ssim"] = "l2"
    branches: Literal["both", "large", "small"] = "both"

    checkpoint_every: int = Field(100, ge=1)
    noise_sigma: float = Field(0.005, ge=0.0)
    large_blur_min: int = Field(9, ge=1)
    large_blur_max: int = Field(15, ge=1)
    small_blur_min: int = Field(1, ge=1)
    small_blur_max: int = Field(3, ge=1)

    @model_validator(mode="after")
    def _check_consistency(self) -> "Config":
        if self.channels % 4:
            raise ValueError("channels must be divisible by 4")
        if self.channels % self.reduction_ratio:
            raise ValueError("channels must be divisible by reduction_ratio")
        if self.crop % 4:
            raise ValueError("crop must be divisible by 4")
        if self.large_blur_min > self.large_blur_max or self.small_blur_min > self.small_blur_max:
            raise ValueError("blur length ranges must satisfy min <= max")
        if self.init_seed is None:
            object.__setattr__(self, "init_seed", self.seed)
        return self

    def with_overrides(self, **overrides: Any) -> "Config":
        return build_config({**self.model_dump(), **overrides})


def build_config(values: dict[str, Any]) -> Config:
    """Собираем Config и переводим ошибки pydantic в ConfigError с именем виноватого ключа."""
    try:
        return Config(**values)
    except ValidationError as exc:
        error = exc.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else None
        if error["type"] == "extra_forbidden":
            raise ConfigError(f"unknown config key {key!r}", key=key) from exc
        label = f"config key {key!r}" if key else "config"
        raise ConfigError(f"invalid {label}: {error['msg']}", key=key) from exc


def parse_config(text: str) -> Config:
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {number}: duplicate config key {key!r}", key=key)
        values[key] = value
    return build_config(values)


def load_config(path: Optional[Path]) -> Config:
    """Без пути возвращаем значения по умолчанию; иначе читаем и валидируем файл."""
    if path is None:
        return Config()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(config: Config) -> str:
    lines = []
    for key, value in config.model_dump().items():
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
