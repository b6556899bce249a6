"""Fiber propagation, WDM routing and broadband attenuation.

Dispersion follows the usual single-mode fiber parameterization by the
zero-dispersion wavelength ``lambda0`` (nm) and slope ``s0`` (ps/(nm^2 km)):

    D(l)   = s0/4 * (l - lambda0**4 / l**3)        ps/(nm km)
    tau(l) = s0/8 * (l - lambda0**2 / l)**2        ps/km, relative to tau(lambda0)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .timetags import Origin, PhotonBatch, PhotonEvent

C_M_PER_S = 299_792_458.0
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


def _as_float_map(m) -> dict[float, float]:
    return {float(k): float(v) for k, v in dict(m).items()}


@dataclass(frozen=True)
class FiberSpec:
    """Single-mode fiber: length (km), per-channel loss (dB/km) and group index."""

    length: float
    loss: Mapping[float, float]
    group_index: Mapping[float, float]
    lambda0: float = 1313.0
    s0: float = 0.092

    def __post_init__(self):
        object.__setattr__(self, "loss", _as_float_map(self.loss))
        object.__setattr__(self, "group_index", _as_float_map(self.group_index))
        if self.length < 0:
            raise ValueError("fiber length must be >= 0")
        if any(v < 0 for v in self.loss.values()):
            raise ValueError("fiber loss must be >= 0 dB/km")
        if any(not 1.0 < v < 2.0 for v in self.group_index.values()):
            raise ValueError("group index entries must lie in (1, 2)")
        if not 1300.0 <= self.lambda0 <= 1330.0:
            raise ValueError(f"lambda0={self.lambda0} nm outside [1300, 1330] nm")

    def with_length(self, length: float) -> "FiberSpec":
        return FiberSpec(length, self.loss, self.group_index, self.lambda0, self.s0)

    def loss_at(self, wavelength: float) -> float:
        wavelength = float(wavelength)
        if wavelength in self.loss:
            return self.loss[wavelength]
        if not self.loss:
            raise KeyError("fiber has no loss entries")
        nearest = min(self.loss, key=lambda w: abs(w - wavelength))
        return self.loss[nearest]

    def group_index_at(self, wavelength: float) -> float:
        try:
            return self.group_index[float(wavelength)]
        except KeyError:
            raise KeyError(f"no group index configured for {wavelength} nm") from None


def smf28(length: float, loss: Mapping[float, float], *, lambda0: float = 1313.0, s0: float = 0.092,
          n_ref: float = 1.4682, ref_wavelength: float = 1310.0, channels=None) -> FiberSpec:
    """Build a FiberSpec whose group indices follow the dispersion model.

    ``n_ref`` is the group index at ``ref_wavelength``; other channels get
    n_ref plus the relative group delay converted to an index offset, so the
    delay difference between any two channels equals relative_group_delay.
    """
    channels = sorted(set(float(w) for w in (channels if channels is not None else loss)) | {float(ref_wavelength)})
    ref = _tau(ref_wavelength, lambda0, s0)
    # ps/km -> dimensionless: dn = c * dtau
    gi = {w: n_ref + C_M_PER_S * (_tau(w, lambda0, s0) - ref) * 1e-12 / 1e3 for w in channels}
    return FiberSpec(length, loss, gi, lambda0, s0)


@dataclass(frozen=True)
class WdmSpec:
    """Two-port band splitter/combiner."""

    port_assignments: Mapping[float, str]
    isolation: float = 16.0
    insertion_loss: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "port_assignments", {float(k): str(v) for k, v in dict(self.port_assignments).items()})
        if not self.isolation > 0:
            raise ValueError("WDM isolation must be > 0 dB")
        if self.insertion_loss < 0:
            raise ValueError("WDM insertion loss must be >= 0 dB")
        if len(self.ports) != 2:
            raise ValueError(f"WDM needs exactly two ports, got {self.ports}")

    @property
    def ports(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.port_assignments.values())))

    @property
    def leak_probability(self) -> float:
        return 10.0 ** (-self.isolation / 10.0)

    @property
    def pass_probability(self) -> float:
        return (1.0 - self.leak_probability) * 10.0 ** (-self.insertion_loss / 10.0)

    def port_of(self, wavelength: float) -> str:
        try:
            return self.port_assignments[float(wavelength)]
        except KeyError:
            raise ValueError(f"wavelength {wavelength} nm has no WDM port assignment") from None

    def other_port(self, port: str) -> str:
        a, b = self.ports
        return b if port == a else a


@dataclass(frozen=True)
class SpectralWidth:
    fwhm_thz: float = 0.0

    def __post_init__(self):
        if self.fwhm_thz < 0:
            raise ValueError("spectral width must be >= 0")


def transmission_probability(fiber: FiberSpec, wavelength: float) -> float:
    return 10.0 ** (-fiber.loss_at(wavelength) * fiber.length / 10.0)


def group_delay(fiber: FiberSpec, wavelength: float) -> int:
    """Propagation delay in whole ps: length * n_g / c."""
    seconds = fiber.length * 1e3 * fiber.group_index_at(wavelength) / C_M_PER_S
    return int(round(seconds * 1e12))


def _tau(wavelength, lambda0, s0):
    return s0 / 8.0 * (wavelength - lambda0 ** 2 / wavelength) ** 2


def relative_group_delay(fiber: FiberSpec, wavelength: float, reference: float) -> float:
    """Group delay of ``wavelength`` minus that of ``reference``, in ps/km."""
    if wavelength <= 0 or reference <= 0:
        raise ValueError("wavelengths must be positive")
    return _tau(wavelength, fiber.lambda0, fiber.s0) - _tau(reference, fiber.lambda0, fiber.s0)


def dispersion_coefficient(fiber: FiberSpec, wavelength: float) -> float:
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return fiber.s0 / 4.0 * (wavelength - fiber.lambda0 ** 4 / wavelength ** 3)


def bandwidth_nm(wavelength: float, width: SpectralWidth) -> float:
    """Convert an optical bandwidth in THz to nm at ``wavelength``."""
    lam_m = wavelength * 1e-9
    return lam_m ** 2 * width.fwhm_thz * 1e12 / C_M_PER_S * 1e9


def broadening_fwhm(fiber: FiberSpec, wavelength: float, width: SpectralWidth) -> float:
    """Chromatic pulse broadening (ps FWHM) accumulated over the fiber length."""
    return abs(dispersion_coefficient(fiber, wavelength)) * bandwidth_nm(wavelength, width) * fiber.length


def calibrate_s0(delay_slope: float, wavelength: float, reference: float, lambda0: float) -> float:
    """Dispersion slope that makes tau(wavelength) - tau(reference) equal ``delay_slope`` ps/km."""
    unit = _tau(wavelength, lambda0, 1.0) - _tau(reference, lambda0, 1.0)
    if unit == 0:
        raise ValueError("wavelengths have identical group delay for any slope")
    return delay_slope / unit


def calibrate_bandwidth(fiber: FiberSpec, wavelength: float, broadening_slope: float) -> SpectralWidth:
    """Effective bandwidth (THz) giving ``broadening_slope`` ps/km of broadening."""
    per_thz = broadening_fwhm(fiber.with_length(1.0), wavelength, SpectralWidth(1.0))
    if per_thz == 0:
        raise ValueError("no dispersion at this wavelength")
    return SpectralWidth(broadening_slope / per_thz)


def _thin(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    if p >= 1.0:
        return np.ones(n, dtype=bool)
    if p <= 0.0:
        return np.zeros(n, dtype=bool)
    return rng.random(n) < p


def propagate(photons: PhotonBatch, fiber: FiberSpec, width_by_channel: Optional[Mapping[float, SpectralWidth]],
              rng: np.random.Generator) -> PhotonBatch:
    """Send photons through a fiber: loss, group delay and Gaussian chromatic jitter."""
    if len(photons) == 0 or fiber.length == 0:
        return photons
    width_by_channel = {float(k): v for k, v in (width_by_channel or {}).items()}
    keep = np.zeros(len(photons), dtype=bool)
    t = photons.t.copy()
    for wl in np.unique(photons.wavelength):
        idx = np.flatnonzero(photons.wavelength == wl)
        survived = idx[_thin(len(idx), transmission_probability(fiber, wl), rng)]
        keep[survived] = True
        dt = np.full(len(survived), group_delay(fiber, wl), dtype=np.int64)
        width = width_by_channel.get(float(wl))
        if width is not None and width.fwhm_thz > 0:
            sigma = broadening_fwhm(fiber, wl, width) / FWHM_PER_SIGMA
            dt += np.rint(rng.normal(0.0, sigma, len(survived))).astype(np.int64)
        t[survived] += dt
    return photons.with_times(t).take(keep)


def attenuate(photons: PhotonBatch, db: float, rng: np.random.Generator) -> PhotonBatch:
    """Broadband loss: keep each photon with probability 10**(-db/10)."""
    if db < 0:
        raise ValueError("attenuation must be >= 0 dB")
    if db == 0 or len(photons) == 0:
        return photons
    return photons.take(_thin(len(photons), 10.0 ** (-db / 10.0), rng))


def wdm_route(photon: PhotonEvent, wdm: WdmSpec, rng: np.random.Generator):
    """Route one photon through a WDM splitter.

    Returns ``(port, photon)``, with leaked photons relabelled LEAK, or None
    when the photon is absorbed.
    """
    port = wdm.port_of(photon.wavelength)
    u = rng.random()
    p_leak = wdm.leak_probability
    if u < p_leak:
        return wdm.other_port(port), photon._replace(origin=Origin.LEAK)
    if u < p_leak + wdm.pass_probability:
        return port, photon
    return None


def wdm_split(photons: PhotonBatch, wdm: WdmSpec, rng: np.random.Generator) -> dict[str, PhotonBatch]:
    """Vectorised :func:`wdm_route` over a batch; returns the photons at each port."""
    uniq, inverse = np.unique(photons.wavelength, return_inverse=True)
    assigned = np.array([wdm.port_of(w) for w in uniq] or [""], dtype=object)
    port = assigned[inverse]
    u = rng.random(len(photons))
    p_leak = wdm.leak_probability
    leak = u < p_leak
    passed = (~leak) & (u < p_leak + wdm.pass_probability)
    origin = photons.origin.copy()
    origin[leak] = int(Origin.LEAK)
    relabelled = PhotonBatch(photons.wavelength, photons.t, origin)
    out = {}
    for name in wdm.ports:
        other = wdm.other_port(name)
        m = (passed & (port == name)) | (leak & (port == other))
        out[name] = relabelled.take(m)
    return out


def wdm_combine(photons: PhotonBatch, wdm: WdmSpec, rng: np.random.Generator) -> PhotonBatch:
    """Combine inputs onto the common port; only insertion loss applies."""
    for w in np.unique(photons.wavelength):
        wdm.port_of(w)
    return attenuate(photons, wdm.insertion_loss, rng)
