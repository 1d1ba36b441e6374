from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Optional

from opentelemetry import metrics
from opentelemetry.exporter.prometheus import PrometheusMetricReader
from opentelemetry.sdk.metrics import MeterProvider
from opentelemetry.sdk.resources import Resource
from prometheus_client import start_http_server

from cdgnet import __version__
from cdgnet.config import METRICS_PORT, SERVICE_NAME

logger = logging.getLogger("cdgnet.telemetry")


@dataclass(slots=True)
class TrainingMetrics:
    step_counter: metrics.Counter
    step_duration: metrics.Histogram
    loss_histogram: metrics.Histogram
    epoch_counter: metrics.Counter


_configured: Optional[TrainingMetrics] = None


def _build_meter_provider(service_name: str) -> tuple[MeterProvider, PrometheusMetricReader]:
    resource = Resource.create(
        {
            "service.name": service_name,
            "service.namespace": "cdgnet",
            "service.instance.id": os.getenv("HOSTNAME", "local"),
        }
    )
    prometheus_reader = PrometheusMetricReader()
    provider = MeterProvider(resource=resource, metric_readers=[prometheus_reader])
    return provider, prometheus_reader


def configure_telemetry(
    service_name: Optional[str] = None,
    metrics_port: Optional[str] = METRICS_PORT,
) -> TrainingMetrics:
    """Включаем метрики обучения через OpenTelemetry; если задан порт, отдаём их Prometheus по HTTP.

    Провайдер и HTTP-сервер поднимаются один раз на процесс, повторные вызовы
    возвращают те же инструменты.
    """
    global _configured
    if _configured is not None:
        return _configured
    resolved_service_name = service_name or SERVICE_NAME

    provider, _ = _build_meter_provider(resolved_service_name)
    metrics.set_meter_provider(provider)

    if metrics_port:
        start_http_server(int(metrics_port))
        logger.info("metrics_port=%s service=%s", metrics_port, resolved_service_name)

    _configured = build_training_metrics(metrics.get_meter("cdgnet.telemetry", version=__version__))
    return _configured


def build_training_metrics(meter: Optional[metrics.Meter] = None) -> TrainingMetrics:
    meter = meter or metrics.get_meter("cdgnet.telemetry", version=__version__)
    return TrainingMetrics(
        step_counter=meter.create_counter(
            name="cdgnet_train_steps_total",
            unit="1",
            description="Total number of optimizer steps taken.",
        ),
        step_duration=meter.create_histogram(
            name="cdgnet_train_step_duration_seconds",
            unit="s",
            description="Duration of one forward/backward/update step in seconds.",
        ),
        loss_histogram=meter.create_histogram(
            name="cdgnet_train_loss",
            unit="1",
            description="Per-step loss values split by component.",
        ),
        epoch_counter=meter.create_counter(
            name="cdgnet_train_epochs_total",
            unit="1",
            description="Total number of finished epochs.",
        ),
    )


def record_training_step(
    telemetry: Optional[TrainingMetrics],
    losses: dict[str, float],
    duration_seconds: float,
) -> None:
    """Один шаг оптимизатора в метрики: сколько занял и какие были слагаемые лосса."""
    if telemetry is None:
        return
    telemetry.step_counter.add(1)
    telemetry.step_duration.record(duration_seconds)
    for component, value in losses.items():
        telemetry.loss_histogram.record(value, attributes={"component": component})


def record_epoch(telemetry: Optional[TrainingMetrics]) -> None:
    if telemetry is None:
        return
    telemetry.epoch_counter.add(1)
