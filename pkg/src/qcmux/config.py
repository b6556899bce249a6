"""Scenario configuration: dataclasses, JSON loading with strict key checking, defaults."""
from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .correlator import Gate
from .detectors import DetectorSpec
from .optics import FiberSpec, SpectralWidth, WdmSpec, calibrate_bandwidth, calibrate_s0, group_delay, smf28
from .sources import ClockPulseSpec, QfcSpec, SpdcSpec

MEASURED_DELAY_SLOPE = 1861.0  # ps/km, 1535 nm vs 1313 nm pairs
MEASURED_BROADENING_SLOPE = 108.0  # ps/km, 1535 nm photons
O_DELAY_LINE = 244_000  # ps, 50 m extra fiber on the O-band detector


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration (CLI exit code 1)."""


class Experiment(str, enum.Enum):
    FIBER_CHARACTERIZATION = "fiber_characterization"
    MULTIPLEX = "multiplex"
    MULTIPLEX_BACKGROUND = "multiplex_background"


@dataclass(frozen=True)
class FiberConfig:
    """Fiber as written in the config file.

    Either give ``group_index`` per channel explicitly or leave it out and the
    indices follow the dispersion model anchored at ``n_ref``/``ref_wavelength``.
    """

    length: float
    loss: dict
    lambda0: float = 1313.0
    s0: float = 0.092
    group_index: Optional[dict] = None
    n_ref: float = 1.4682
    ref_wavelength: float = 1310.0

    def __post_init__(self):
        object.__setattr__(self, "loss", {float(k): float(v) for k, v in dict(self.loss).items()})
        if self.group_index is not None:
            object.__setattr__(self, "group_index", {float(k): float(v) for k, v in dict(self.group_index).items()})

    def build(self, length: Optional[float] = None) -> FiberSpec:
        L = self.length if length is None else length
        if self.group_index is not None:
            return FiberSpec(L, self.loss, self.group_index, self.lambda0, self.s0)
        return smf28(L, self.loss, lambda0=self.lambda0, s0=self.s0, n_ref=self.n_ref,
                     ref_wavelength=self.ref_wavelength)


@dataclass(frozen=True)
class CorrelatorConfig:
    bin_width_ps: int = 1000
    window_ps: tuple = (-1_000_000, 1_000_000)
    gate: Optional[Gate] = None
    min_coincidences: int = 50


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    duration_ps: int
    experiment: Experiment
    spdc: SpdcSpec
    fibers: dict  # name -> FiberConfig; "link" required, "o_delay" for multiplexing
    wdm: WdmSpec
    detectors: dict  # role -> DetectorSpec; roles: herald, o_band, c_band
    correlator: CorrelatorConfig = field(default_factory=CorrelatorConfig)
    qfc: Optional[QfcSpec] = None
    clock: Optional[ClockPulseSpec] = None
    spectral_widths_thz: dict = field(default_factory=dict)
    sweep_km: tuple = ()
    signal_arm_delay_ps: int = 0
    clock_arm_delay_ps: int = 0
    raman_kappa: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "spectral_widths_thz",
                           {float(k): float(v) for k, v in dict(self.spectral_widths_thz).items()})
        if self.duration_ps < 0:
            raise ConfigError("duration_ps must be >= 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if "link" not in self.fibers:
            raise ConfigError("fibers.link is required")
        needed = {"o_band", "c_band"}
        if self.experiment != Experiment.FIBER_CHARACTERIZATION:
            needed |= {"herald"}
            if self.qfc is None or self.clock is None:
                raise ConfigError("multiplex experiments need qfc and clock sections")
            if "o_delay" not in self.fibers:
                raise ConfigError("multiplex experiments need fibers.o_delay")
        missing = needed - set(self.detectors)
        if missing:
            raise ConfigError(f"missing detectors: {sorted(missing)}")
        if self.raman_kappa < 0:
            raise ConfigError("raman_kappa must be >= 0")
        self._check_channels()

    def _check_channels(self):
        for w in self.wavelengths_in_fiber():
            for name, fc in self.fibers.items():
                if float(w) not in fc.loss:
                    raise ConfigError(f"fiber {name!r} has no loss entry for {w} nm")
            try:
                self.wdm.port_of(w)
            except ValueError as e:
                raise ConfigError(str(e)) from None
            for role in ("o_band", "c_band"):
                if float(w) not in self.detectors[role].efficiency:
                    raise ConfigError(f"detector {role!r} has no efficiency for {w} nm")
        if "herald" in self.detectors and self.experiment != Experiment.FIBER_CHARACTERIZATION:
            if float(self.spdc.herald_wavelength) not in self.detectors["herald"].efficiency:
                raise ConfigError("herald detector has no efficiency for the herald wavelength")

    def wavelengths_in_fiber(self) -> list[float]:
        if self.experiment == Experiment.FIBER_CHARACTERIZATION:
            return [self.spdc.signal_wavelength, self.spdc.herald_wavelength]
        return [self.qfc.output_wavelength, self.clock.wavelength]

    @property
    def lengths(self) -> list[float]:
        return list(self.sweep_km) if self.sweep_km else [self.fibers["link"].length]

    @property
    def widths(self) -> dict[float, SpectralWidth]:
        return {float(k): SpectralWidth(float(v)) for k, v in self.spectral_widths_thz.items()}

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _to_plain(self)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {_key(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _key(k):
    if isinstance(k, float) and k.is_integer():
        return str(int(k))
    return str(k)


_SECTIONS = {
    "spdc": SpdcSpec,
    "qfc": QfcSpec,
    "clock": ClockPulseSpec,
    "wdm": WdmSpec,
}


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    required = {f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING}
    missing = required - set(data)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(f"{where}: {e}") from None


def config_from_dict(d: dict) -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    top = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(d) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    if "seed" not in d:
        raise ConfigError("seed is required (no implicit entropy)")
    d = dict(d)
    try:
        d["experiment"] = Experiment(d.get("experiment"))
    except ValueError:
        raise ConfigError(f"unknown experiment {d.get('experiment')!r}") from None
    for key, cls in _SECTIONS.items():
        if d.get(key) is not None:
            d[key] = _build(cls, d[key], key)
    d["fibers"] = {name: _build(FiberConfig, fc, f"fibers.{name}") for name, fc in dict(d.get("fibers", {})).items()}
    d["detectors"] = {role: _build(DetectorSpec, ds, f"detectors.{role}")
                      for role, ds in dict(d.get("detectors", {})).items()}
    if "correlator" in d:
        c = dict(d["correlator"])
        if c.get("gate") is not None:
            c["gate"] = _build(Gate, c["gate"], "correlator.gate")
        if "window_ps" in c:
            c["window_ps"] = tuple(int(x) for x in c["window_ps"])
        d["correlator"] = _build(CorrelatorConfig, c, "correlator")
    if "sweep_km" in d:
        d["sweep_km"] = tuple(float(x) for x in d["sweep_km"])
    return _build(ScenarioConfig, d, "config")


def load_config(path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return config_from_dict(data)


def dump_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


# --- defaults -----------------------------------------------------------------

def calibrated_s0(lambda0: float = 1313.0) -> float:
    return calibrate_s0(MEASURED_DELAY_SLOPE, 1535.0, 1313.0, lambda0)


def calibrated_bandwidth_thz(s0: float, lambda0: float = 1313.0, wavelength: float = 1535.0) -> float:
    fiber = FiberSpec(1.0, {wavelength: 0.0}, {}, lambda0, s0)
    return calibrate_bandwidth(fiber, wavelength, MEASURED_BROADENING_SLOPE).fwhm_thz


def _sspd(channel: int) -> DetectorSpec:
    eff = {1310.0: 0.25, 1313.0: 0.25, 1535.0: 0.25, 1550.0: 0.25}
    return DetectorSpec(channel=channel, efficiency=eff, dark_rate=100.0, jitter_fwhm=0.0, dead_time=10_000.0)


def _wdm() -> WdmSpec:
    return WdmSpec({1310.0: "O", 1313.0: "O", 1535.0: "C", 1550.0: "C"}, isolation=16.0, insertion_loss=0.5)


def default_characterization(seed: int = 20160101) -> ScenarioConfig:
    s0 = calibrated_s0()
    bw = calibrated_bandwidth_thz(s0)
    link = FiberConfig(length=0.002, loss={1313.0: 0.25, 1535.0: 0.2}, lambda0=1313.0, s0=s0)
    return ScenarioConfig(
        seed=seed,
        duration_ps=2 * 10 ** 12,
        experiment=Experiment.FIBER_CHARACTERIZATION,
        spdc=SpdcSpec(pair_rate=1e6, signal_wavelength=1313.0, herald_wavelength=1535.0, coherence_time=5.0),
        fibers={"link": link},
        wdm=_wdm(),
        detectors={"o_band": _sspd(1), "c_band": _sspd(2)},
        correlator=CorrelatorConfig(bin_width_ps=50, window_ps=(-10_000, 50_000), min_coincidences=100),
        spectral_widths_thz={1313.0: 1.0, 1535.0: round(bw, 6)},
        sweep_km=(0.002, 2.0, 5.0, 10.0, 20.0),
    )


def default_multiplex(seed: int = 20160101, background: bool = False) -> ScenarioConfig:
    s0 = calibrated_s0()
    bw = calibrated_bandwidth_thz(s0)
    loss = {1310.0: 0.25, 1550.0: 0.2}
    # group index at 1310 nm chosen so the 50 m line gives the measured 244 ns
    n_ref = round(O_DELAY_LINE * 1e-12 * 299_792_458.0 / 50.0, 6)
    link = FiberConfig(length=0.002, loss=loss, lambda0=1313.0, s0=s0, n_ref=n_ref)
    o_delay = FiberConfig(length=0.05, loss=loss, lambda0=1313.0, s0=s0, n_ref=n_ref)
    pulse_width = 30_000
    # signal photon reaches the O detector mid-pulse in the 2 m reference: the
    # herald -> laser path is slower than the signal path by the O delay line
    d50 = group_delay(o_delay.build(), 1310.0)
    electronic_delay = d50 - pulse_width // 2
    herald = DetectorSpec(channel=0, efficiency={854.0: 0.30}, dark_rate=100.0, dead_time=50_000.0)
    return ScenarioConfig(
        seed=seed,
        duration_ps=7 * 10 ** 12,
        experiment=Experiment.MULTIPLEX_BACKGROUND if background else Experiment.MULTIPLEX,
        spdc=SpdcSpec(pair_rate=1e5, signal_wavelength=854.0, herald_wavelength=854.0, coherence_time=5.0),
        qfc=QfcSpec(efficiency=0.08, output_wavelength=1310.0, noise_rate=1000.0),
        clock=ClockPulseSpec(wavelength=1550.0, pulse_width=pulse_width, electronic_delay=electronic_delay,
                             mean_photons=8.0, cw_background_rate=1000.0),
        fibers={"link": link, "o_delay": o_delay},
        wdm=_wdm(),
        detectors={"herald": herald, "o_band": _sspd(1), "c_band": _sspd(2)},
        correlator=CorrelatorConfig(bin_width_ps=1000, window_ps=(-1_000_000, 1_000_000), min_coincidences=50),
        spectral_widths_thz={1310.0: 1.0, 1550.0: round(bw, 6)},
        sweep_km=(0.002, 20.0),
    )


def default_config(experiment) -> ScenarioConfig:
    experiment = Experiment(experiment)
    if experiment == Experiment.FIBER_CHARACTERIZATION:
        return default_characterization()
    return default_multiplex(background=experiment == Experiment.MULTIPLEX_BACKGROUND)
