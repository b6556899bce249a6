"""Photon sources: SPDC pairs, frequency conversion, herald-triggered laser pulses, noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optics import FiberSpec
from .timetags import EventStream, Origin, PhotonBatch

PS_PER_S = 1e12


@dataclass(frozen=True)
class SpdcSpec:
    pair_rate: float  # pairs/s
    signal_wavelength: float = 854.0
    herald_wavelength: float = 854.0
    coherence_time: float = 5.0  # ps

    def __post_init__(self):
        if not self.pair_rate > 0:
            raise ValueError("pair_rate must be > 0")
        if self.coherence_time < 0:
            raise ValueError("coherence_time must be >= 0")


@dataclass(frozen=True)
class QfcSpec:
    efficiency: float = 0.08
    output_wavelength: float = 1310.0
    noise_rate: float = 0.0  # photons/s at the converter output

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("QFC efficiency must be in [0, 1]")
        if self.noise_rate < 0:
            raise ValueError("noise_rate must be >= 0")


@dataclass(frozen=True)
class ClockPulseSpec:
    """Rectangular laser pulse fired by each herald detection.

    ``mean_photons`` counts photons per pulse after the neutral-density
    attenuation, at the laser output.
    """

    wavelength: float = 1550.0
    pulse_width: float = 30_000.0  # ps
    electronic_delay: float = 0.0  # ps, herald click -> optical pulse start
    mean_photons: float = 1.0
    cw_background_rate: float = 0.0  # photons/s
    trigger_jitter: float = 0.0  # ps FWHM, Gaussian

    def __post_init__(self):
        if not self.pulse_width > 0:
            raise ValueError("pulse_width must be > 0")
        if self.mean_photons < 0:
            raise ValueError("mean_photons must be >= 0")
        if self.cw_background_rate < 0 or self.trigger_jitter < 0:
            raise ValueError("rates and jitter must be >= 0")


def poisson_times(rate: float, duration: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted integer-ps arrival times of a homogeneous Poisson process on [0, duration]."""
    if rate <= 0 or duration <= 0:
        return np.empty(0, dtype=np.int64)
    n = rng.poisson(rate * duration / PS_PER_S)
    return np.sort(rng.integers(0, int(duration), n, endpoint=True))


def generate_pairs(spec: SpdcSpec, duration: int, rng: np.random.Generator):
    """Draw SPDC pairs; returns (signal, herald) batches, index aligned."""
    herald_t = poisson_times(spec.pair_rate, duration, rng)
    offset = rng.laplace(0.0, spec.coherence_time, len(herald_t)) if spec.coherence_time > 0 else 0.0
    signal_t = np.clip(herald_t + np.rint(offset).astype(np.int64), 0, int(max(duration, 0)))
    signal = PhotonBatch.uniform(spec.signal_wavelength, signal_t, Origin.SIGNAL)
    herald = PhotonBatch.uniform(spec.herald_wavelength, herald_t, Origin.HERALD)
    return signal, herald


def noise_photons(rate: float, wavelength: float, duration: int, rng: np.random.Generator) -> PhotonBatch:
    return PhotonBatch.uniform(wavelength, poisson_times(rate, duration, rng), Origin.NOISE)


def qfc_convert(photons: PhotonBatch, spec: QfcSpec, duration: int, rng: np.random.Generator) -> PhotonBatch:
    """Frequency-convert with finite efficiency and add converter noise photons."""
    if spec.efficiency >= 1.0:
        converted = photons
    else:
        converted = photons.take(rng.random(len(photons)) < spec.efficiency)
    converted = PhotonBatch(np.full(len(converted), float(spec.output_wavelength)), converted.t, converted.origin)
    noise = noise_photons(spec.noise_rate, spec.output_wavelength, duration, rng)
    return PhotonBatch.concat([converted, noise])


def trigger_pulses(herald_detections: EventStream, spec: ClockPulseSpec, rng: np.random.Generator,
                   duration: int | None = None) -> PhotonBatch:
    """Fire one rectangular pulse per herald tag, plus the laser's CW emission floor."""
    heralds = herald_detections.t
    if len(heralds) > 1 and np.any(np.diff(heralds) < 0):
        raise ValueError("herald detections must be sorted")
    duration = herald_detections.duration if duration is None else int(duration)
    counts = rng.poisson(spec.mean_photons, len(heralds)) if spec.mean_photons > 0 else np.zeros(len(heralds), int)
    start = heralds + int(round(spec.electronic_delay))
    if spec.trigger_jitter > 0:
        sigma = spec.trigger_jitter / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        start = start + np.rint(rng.normal(0.0, sigma, len(heralds))).astype(np.int64)
    start = np.repeat(start, counts)
    width = int(round(spec.pulse_width))
    t = start + rng.integers(0, width, len(start), endpoint=True)
    pulses = PhotonBatch.uniform(spec.wavelength, t, Origin.CLASSICAL)
    floor = noise_photons(spec.cw_background_rate, spec.wavelength, duration, rng)
    return PhotonBatch.concat([pulses, floor])


def raman_noise(classical_rate: float, fiber: FiberSpec, kappa: float, duration: int,
                rng: np.random.Generator, wavelength: float = 1310.0) -> PhotonBatch:
    """Anti-Stokes Raman photons in the quantum band, rate kappa * classical_rate * length."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    return noise_photons(kappa * classical_rate * fiber.length, wavelength, duration, rng)
