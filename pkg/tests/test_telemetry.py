from opentelemetry.sdk.metrics import MeterProvider
from opentelemetry.sdk.metrics.export import InMemoryMetricReader

import cdgnet.telemetry as telemetry_module
from cdgnet.telemetry import build_training_metrics, configure_telemetry, record_epoch, record_training_step


def _collected(reader):
    data = reader.get_metrics_data()
    found = {}
    for resource_metrics in data.resource_metrics:
        for scope_metrics in resource_metrics.scope_metrics:
            for metric in scope_metrics.metrics:
                found[metric.name] = list(metric.data.data_points)
    return found


def test_training_step_and_epoch_are_recorded():
    reader = InMemoryMetricReader()
    provider = MeterProvider(metric_readers=[reader])
    telemetry = build_training_metrics(provider.get_meter("test"))

    record_training_step(telemetry, {"total": 0.5, "rec": 0.4, "s": 0.6, "l": 0.4}, 0.01)
    record_training_step(telemetry, {"total": 0.3, "rec": 0.2, "s": 0.5, "l": 0.5}, 0.02)
    record_epoch(telemetry)

    found = _collected(reader)
    assert found["cdgnet_train_steps_total"][0].value == 2
    assert found["cdgnet_train_epochs_total"][0].value == 1
    assert found["cdgnet_train_step_duration_seconds"][0].count == 2
    components = {point.attributes["component"] for point in found["cdgnet_train_loss"]}
    assert components == {"total", "rec", "s", "l"}


def test_recording_without_telemetry_is_a_no_op():
    record_training_step(None, {"total": 1.0}, 0.1)
    record_epoch(None)


def test_meter_provider_is_installed_once_per_process(monkeypatch):
    installed = []
    monkeypatch.setattr(telemetry_module, "_configured", None)
    monkeypatch.setattr(telemetry_module.metrics, "set_meter_provider", installed.append)
    first = configure_telemetry(metrics_port=None)
    second = configure_telemetry(metrics_port=None)
    assert first is second
    assert len(installed) == 1
