"""Бинарный чекпоинт: magic "CDGN", версия, именованные тензоры float32 little-endian, опционально Adam и конфиг."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from cdgnet.errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from cdgnet.nn.module import Module
from cdgnet.storage import atomic_write_bytes
from cdgnet.training.optimizer import AdamState

logger = logging.getLogger("cdgnet.checkpoint")

MAGIC = b"CDGN"
VERSION = 1
_STORED = np.dtype("<f4")


@dataclass(slots=True)
class CheckpointState:
    parameters: dict[str, np.ndarray] = field(default_factory=dict)
    adam: Optional[AdamState] = None
    epoch: int = 0
    config_text: Optional[str] = None


def _pack_array(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype=_STORED).tobytes()


def encode_checkpoint(state: CheckpointState) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(state.parameters))]
    for name, array in state.parameters.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(_pack_array(array))

    if state.adam is None:
        chunks.append(b"\x00")
    else:
        chunks.append(b"\x01")
        chunks.append(struct.pack("<QI", state.adam.step, state.epoch))
        for first, second in zip(state.adam.first, state.adam.second):
            chunks.append(_pack_array(first))
            chunks.append(_pack_array(second))

    if state.config_text is None:
        chunks.append(b"\x00")
    else:
        encoded = state.config_text.encode("utf-8")
        chunks.append(b"\x01")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
    return b"".join(chunks)


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CheckpointTruncatedError(
                f"checkpoint truncated while reading {what} at byte {self.offset}"
            )
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, shape: tuple[int, ...], what: str) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        raw = self.take(count * _STORED.itemsize, what)
        return np.frombuffer(raw, dtype=_STORED).astype(np.float32).reshape(shape)


def decode_checkpoint(payload: bytes) -> CheckpointState:
    reader = _Reader(payload)
    magic = reader.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    version, count = reader.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}, expected {VERSION}")

    state = CheckpointState()
    shapes = []
    for index in range(count):
        (name_len,) = reader.unpack("<I", f"name length of parameter {index}")
        name = reader.take(name_len, f"name of parameter {index}").decode("utf-8")
        (rank,) = reader.unpack("<I", f"rank of {name}")
        shape = reader.unpack(f"<{rank}I", f"extents of {name}")
        state.parameters[name] = reader.array(shape, f"data of {name}")
        shapes.append(shape)

    (has_adam,) = reader.unpack("<B", "optimizer flag")
    if has_adam:
        step, epoch = reader.unpack("<QI", "optimizer header")
        adam = AdamState(step=step)
        for name, shape in zip(state.parameters, shapes):
            adam.first.append(reader.array(shape, f"first moment of {name}"))
            adam.second.append(reader.array(shape, f"second moment of {name}"))
        state.adam = adam
        state.epoch = epoch

    (has_config,) = reader.unpack("<B", "config flag")
    if has_config:
        (length,) = reader.unpack("<I", "config length")
        state.config_text = reader.take(length, "config text").decode("utf-8")
    if reader.offset != len(payload):
        raise CheckpointFormatError(f"{len(payload) - reader.offset} trailing bytes after checkpoint")
    return state


def capture(
    model: Module,
    adam: Optional[AdamState] = None,
    epoch: int = 0,
    config_text: Optional[str] = None,
) -> CheckpointState:
    """Снимок модели в памяти: копии массивов, чтобы дальнейшее обучение их не трогало."""
    return CheckpointState(
        parameters={name: param.data.copy() for name, param in model.named_parameters()},
        adam=None
        if adam is None
        else AdamState(
            first=[m.copy() for m in adam.first],
            second=[v.copy() for v in adam.second],
            step=adam.step,
        ),
        epoch=epoch,
        config_text=config_text,
    )


def write_checkpoint(state: CheckpointState, path: Path) -> None:
    atomic_write_bytes(Path(path), encode_checkpoint(state))
    logger.info("checkpoint=%s params=%d epoch=%d", path, len(state.parameters), state.epoch)


def save_checkpoint(
    model: Module,
    path: Path,
    adam: Optional[AdamState] = None,
    epoch: int = 0,
    config_text: Optional[str] = None,
) -> None:
    write_checkpoint(capture(model, adam, epoch, config_text), path)


def read_checkpoint(path: Path) -> CheckpointState:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(payload)


def apply_checkpoint(model: Module, state: CheckpointState) -> None:
    """Кладём веса в модель; первая же несовпавшая по имени или форме запись даёт ошибку с её именем."""
    named = list(model.named_parameters())
    for (name, param), (stored_name, array) in zip(named, state.parameters.items()):
        if name != stored_name:
            raise CheckpointShapeError(
                f"checkpoint parameter {stored_name!r} where model expects {name!r}", name=name
            )
        if array.shape != param.shape:
            raise CheckpointShapeError(
                f"parameter {name!r} has shape {array.shape} in checkpoint, model expects {param.shape}",
                name=name,
            )
    if len(named) != len(state.parameters):
        missing = named[len(state.parameters)][0] if len(named) > len(state.parameters) else list(
            state.parameters
        )[len(named)]
        raise CheckpointShapeError(
            f"checkpoint holds {len(state.parameters)} parameters, model has {len(named)}", name=missing
        )
    for (_, param), array in zip(named, state.parameters.values()):
        param.data = array.astype(param.dtype, copy=True)
        if param.mask is not None:
            param.data *= param.mask


def load_checkpoint(path: Path, model: Module) -> CheckpointState:
    state = read_checkpoint(path)
    apply_checkpoint(model, state)
    logger.info("checkpoint=%s loaded params=%d epoch=%d", path, len(state.parameters), state.epoch)
    return state
