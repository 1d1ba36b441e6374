"""Цикл обучения: эпохи с drop-last, Adam по ступенчатому расписанию, CSV-лог, чекпоинты и остановка на NaN."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from cdgnet.config import Config, dump_config
from cdgnet.data.dataset import Batch, ImagePair, batches_per_epoch, epoch_batches
from cdgnet.errors import InputError, NonFiniteError, TrainingDivergedError
from cdgnet.models.network import CDGNet
from cdgnet.storage import atomic_write_text
from cdgnet.telemetry import TrainingMetrics, record_epoch, record_training_step
from cdgnet.tensor import Tensor, backward
from cdgnet.training.checkpoint import CheckpointState, apply_checkpoint, capture, read_checkpoint, write_checkpoint
from cdgnet.training.optimizer import AdamState, Schedule, adam_step
from cdgnet.training.supervision import LossWeights, loss_terms

logger = logging.getLogger("cdgnet.train")

METRICS_HEADER = "epoch,lr,loss_total,loss_rec,loss_s,loss_l"


@dataclass(slots=True)
class EpochRecord:
    epoch: int
    lr: float
    total: float
    rec: float
    s: float
    l: float  # noqa: E741

    def csv_row(self) -> str:
        return f"{self.epoch},{self.lr:.9g},{self.total:.9g},{self.rec:.9g},{self.s:.9g},{self.l:.9g}"


@dataclass(slots=True)
class TrainResult:
    checkpoint: Path
    metrics_log: Path
    epochs: list[EpochRecord] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)


def metrics_path_for(checkpoint: Path) -> Path:
    return Path(checkpoint).with_suffix(".metrics.csv")


def last_good_path_for(checkpoint: Path) -> Path:
    return Path(checkpoint).with_suffix(".last_good.ckpt")


def parse_metrics_log(text: str) -> list[EpochRecord]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != METRICS_HEADER:
        raise InputError(f"metrics log must start with {METRICS_HEADER!r}")
    records = []
    for line in lines[1:]:
        epoch, lr, total, rec, s, l = line.split(",")  # noqa: E741
        records.append(EpochRecord(int(epoch), float(lr), float(total), float(rec), float(s), float(l)))
    return records


class Trainer:
    """Владеет моделью и состоянием Adam; обновления строго последовательны."""

    def __init__(
        self,
        model: CDGNet,
        config: Config,
        out: Path,
        telemetry: Optional[TrainingMetrics] = None,
    ) -> None:
        self.model = model
        self.config = config
        self.out = Path(out)
        self.telemetry = telemetry
        self.params = model.parameters()
        self.adam = AdamState.for_parameters(self.params)
        self.schedule = Schedule(
            base_lr=config.lr, decay=config.lr_decay, step_size=config.lr_step, total_epochs=config.epochs
        )
        self.weights = LossWeights(lambda1=config.lambda1, lambda2=config.lambda2)
        self.config_text = dump_config(config)
        self.start_epoch = 0
        self.history: list[EpochRecord] = []

    def resume(self, path: Path) -> CheckpointState:
        """Продолжаем с сохранённой эпохи: веса, моменты Adam и уже записанный лог."""
        state = read_checkpoint(path)
        apply_checkpoint(self.model, state)
        if state.adam is not None:
            self.adam = state.adam
        self.start_epoch = state.epoch
        log_path = metrics_path_for(self.out)
        if log_path.is_file():
            self.history = [r for r in parse_metrics_log(log_path.read_text(encoding="utf-8")) if r.epoch < state.epoch]
        logger.info(
            "resume=%s epoch=%d step=%d lr=%.3e", path, state.epoch, self.adam.step, self.schedule.lr_at(state.epoch)
        )
        return state

    def snapshot(self, epoch: int) -> CheckpointState:
        return capture(self.model, self.adam, epoch, self.config_text)

    def train_step(self, batch: Batch, lr: float) -> dict[str, float]:
        started = time.perf_counter()
        output = self.model(Tensor(batch.blurry))
        l_img, s_img = output.branch_heads()
        terms = loss_terms(
            output.image,
            l_img,
            s_img,
            batch.sharp,
            batch.mask,
            self.weights,
            rec_loss=self.config.rec_loss,
        )
        values = terms.values()
        if not all(math.isfinite(v) for v in values.values()):
            return values
        backward(terms.total, self.params)
        adam_step(self.params, self.adam, lr)
        record_training_step(self.telemetry, values, time.perf_counter() - started)
        return values

    def _diverged(self, epoch: int, last_good: CheckpointState, reason: str) -> TrainingDivergedError:
        dump = last_good_path_for(self.out)
        write_checkpoint(last_good, dump)
        logger.error("epoch=%d step=%d non-finite %s dumped=%s", epoch, self.adam.step, reason, dump)
        return TrainingDivergedError(
            f"training became non-finite at epoch {epoch} ({reason}); last good state saved to {dump}",
            checkpoint_path=dump,
        )

    def _write_metrics(self) -> Path:
        path = metrics_path_for(self.out)
        rows = [METRICS_HEADER, *(record.csv_row() for record in self.history)]
        atomic_write_text(path, "\n".join(rows) + "\n")
        return path

    def run(self, pairs: Sequence[ImagePair]) -> TrainResult:
        config = self.config
        if not pairs:
            raise InputError("dataset is empty")
        if batches_per_epoch(len(pairs), config.batch) == 0:
            raise InputError(f"dataset has {len(pairs)} pairs, fewer than batch {config.batch}")
        smallest = min(min(p.height, p.width) for p in pairs)
        if config.crop > smallest:
            raise InputError(f"crop {config.crop} exceeds smallest image extent {smallest}")

        step_losses: list[float] = []
        last_good = self.snapshot(self.start_epoch)
        for epoch in range(self.start_epoch, config.epochs):
            lr = self.schedule.lr_at(epoch)
            sums = np.zeros(4)
            count = 0
            for batch in epoch_batches(pairs, config.batch, config.crop, config.seed, epoch):
                try:
                    values = self.train_step(batch, lr)
                except NonFiniteError as exc:
                    raise self._diverged(epoch, last_good, f"gradient={exc.name}") from exc
                if not all(math.isfinite(v) for v in values.values()):
                    raise self._diverged(epoch, last_good, f"loss={values}")
                sums += (values["total"], values["rec"], values["s"], values["l"])
                count += 1
                step_losses.append(values["total"])

            means = sums / count
            record = EpochRecord(epoch, lr, *map(float, means))
            self.history.append(record)
            self._write_metrics()
            record_epoch(self.telemetry)
            logger.info(
                "epoch=%d lr=%.3e loss_total=%.6f loss_rec=%.6f loss_s=%.6f loss_l=%.6f",
                epoch,
                lr,
                record.total,
                record.rec,
                record.s,
                record.l,
            )
            last_good = self.snapshot(epoch + 1)
            if (epoch + 1) % config.checkpoint_every == 0 and epoch + 1 < config.epochs:
                write_checkpoint(last_good, self.out)

        write_checkpoint(last_good, self.out)
        return TrainResult(
            checkpoint=self.out,
            metrics_log=metrics_path_for(self.out),
            epochs=list(self.history),
            step_losses=step_losses,
        )


def train(
    pairs: Sequence[ImagePair],
    config: Config,
    out: Path,
    resume: Optional[Path] = None,
    telemetry: Optional[TrainingMetrics] = None,
) -> TrainResult:
    """Обучение как чистая функция от (данные, конфиг, seed): веса из init_seed, кропы и порядок из seed."""
    model = CDGNet(config)
    trainer = Trainer(model, config, out, telemetry=telemetry)
    if resume is not None:
        trainer.resume(resume)
    logger.info(
        "train pairs=%d batch=%d crop=%d epochs=%d start_epoch=%d",
        len(pairs),
        config.batch,
        config.crop,
        config.epochs,
        trainer.start_epoch,
    )
    return trainer.run(pairs)
