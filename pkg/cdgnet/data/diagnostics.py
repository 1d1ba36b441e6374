"""Диагностика степени блюра: гистограмма градиентов и радиальный профиль спектра."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cdgnet.storage import atomic_write_text
from cdgnet.training.supervision import luma

HISTOGRAM_BINS = 64
TAIL_FROM_BIN = 32
HALF_NYQUIST = 0.25
_SILENT_SPECTRUM = 1e-18


def gradient_histogram(image: np.ndarray) -> np.ndarray:
    """64 корзины по |∇I| на [0, 1]; разности вперёд, поэтому масса = (H−1)·(W−1)."""
    y = luma(image)
    base = y[:-1, :-1]
    gx = y[:-1, 1:] - base
    gy = y[1:, :-1] - base
    magnitude = np.clip(np.hypot(gx, gy), 0.0, 1.0)
    counts, _ = np.histogram(magnitude, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return counts


def tail_mass(histogram: np.ndarray) -> int:
    return int(np.asarray(histogram)[TAIL_FROM_BIN:].sum())


@dataclass(slots=True)
class Spectrum:
    radii: np.ndarray
    log_magnitude: np.ndarray
    hf_ratio: float
    power: float


def fourier_spectrum(image: np.ndarray) -> Spectrum:
    """ДПФ яркости: радиальное среднее log(1+|F|) и доля энергии выше половины Найквиста без DC."""
    y = luma(image)
    height, width = y.shape
    spectrum = np.fft.fft2(y)
    power = np.abs(spectrum) ** 2

    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    rho = np.hypot(fy, fx)
    dc = rho == 0
    total = float(power[~dc].sum())
    if total <= _SILENT_SPECTRUM * float(power.sum()) or total == 0.0:
        hf_ratio = 0.0
    else:
        hf_ratio = float(power[rho > HALF_NYQUIST].sum()) / total

    radius = np.rint(rho * max(height, width)).astype(np.int64).ravel()
    log_mag = np.log1p(np.abs(spectrum)).ravel()
    sums = np.bincount(radius, weights=log_mag)
    counts = np.bincount(radius)
    present = counts > 0
    radii = np.nonzero(present)[0]
    return Spectrum(
        radii=radii,
        log_magnitude=sums[present] / counts[present],
        hf_ratio=min(max(hf_ratio, 0.0), 1.0),
        power=float(power.sum()),
    )


@dataclass(slots=True)
class BlurDiagnostics:
    histogram: np.ndarray
    spectrum: Spectrum

    @property
    def hf_ratio(self) -> float:
        return self.spectrum.hf_ratio

    @property
    def tail(self) -> int:
        return tail_mass(self.histogram)


def diagnose(image: np.ndarray) -> BlurDiagnostics:
    return BlurDiagnostics(histogram=gradient_histogram(image), spectrum=fourier_spectrum(image))


def format_diagnostics(diagnostics: BlurDiagnostics) -> str:
    """Три секции подряд: bin_index,count, затем radius,log_mag, затем hf_ratio."""
    lines = ["bin_index,count"]
    lines.extend(f"{index},{int(count)}" for index, count in enumerate(diagnostics.histogram))
    lines.append("radius,log_mag")
    lines.extend(
        f"{int(radius)},{value:.9g}"
        for radius, value in zip(diagnostics.spectrum.radii, diagnostics.spectrum.log_magnitude)
    )
    lines.append("hf_ratio")
    lines.append(f"{diagnostics.hf_ratio:.9g}")
    return "\n".join(lines) + "\n"


def write_diagnostics(diagnostics: BlurDiagnostics, path: Path) -> None:
    atomic_write_text(Path(path), format_diagnostics(diagnostics))
