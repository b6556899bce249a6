"""Experiment pipelines: fiber characterization sweep and quantum/classical multiplexing."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, Experiment, ScenarioConfig
from .correlator import (Gate, Histogram, PeakReport, car, cross_correlate, find_peaks, gated_counts,
                         pair_indices, peak_report)
from .detectors import detect
from .linkbudget import LinkBudgetInput, summary as linkbudget_summary
from .optics import (broadening_fwhm, group_delay, propagate, relative_group_delay, wdm_combine,
                     wdm_split)
from .sources import generate_pairs, qfc_convert, raman_noise, trigger_pulses
from .timetags import EventStream, Origin, PhotonBatch

# substream ids per pipeline stage, so each stage's draws are independent of the others
_STAGES = ("pairs", "herald_det", "clock", "qfc", "combine", "raman", "link", "split", "o_delay",
           "det_o", "det_c")

MEASURED_REFERENCE = {
    "delay_slope_ps_per_km": 1861.0,
    "broadening_slope_ps_per_km": 108.0,
    "o_delay_line_ns": 244.0,
    "crosstalk_base_predicted_ns": 60.0,
    "crosstalk_base_measured_ns": 62.0,
    "signal_shift_20km_predicted_ns": 37.2,
    "signal_shift_20km_measured_ns": 43.0,
    "signal_base_20km_predicted_ns": 32.0,
    "signal_base_20km_measured_ns": 34.0,
}


class StatisticsError(RuntimeError):
    """Not enough data for a requested estimate (CLI exit code 2)."""


def stage_rngs(seed: int, index: int = 0) -> dict[str, np.random.Generator]:
    """Independent generators per pipeline stage for sweep point ``index``."""
    point_seed = (int(seed) ^ int(index)) & (2 ** 64 - 1)
    return {name: np.random.default_rng(np.random.SeedSequence([point_seed, k]))
            for k, name in enumerate(_STAGES)}


def fit_linear(x, y, sigma=None):
    """Weighted least squares line; returns (slope, intercept, slope_error).

    With ``sigma`` omitted all points get unit weight and the slope error is
    scaled by the residual scatter instead.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    if len(np.unique(x)) < 2:
        raise StatisticsError("need at least two distinct x values for a line fit")
    w = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    S, Sx, Sy = w.sum(), (w * x).sum(), (w * y).sum()
    Sxx, Sxy = (w * x * x).sum(), (w * x * y).sum()
    delta = S * Sxx - Sx * Sx
    slope = (S * Sxy - Sx * Sy) / delta
    intercept = (Sxx * Sy - Sx * Sxy) / delta
    slope_err = math.sqrt(S / delta)
    if sigma is None:
        dof = len(x) - 2
        resid = y - (slope * x + intercept)
        slope_err *= math.sqrt((resid ** 2).sum() / dof) if dof > 0 else 0.0
    return float(slope), float(intercept), float(slope_err)


@dataclass
class RunReport:
    experiment: str
    points: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    link_budget: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    version: str = __version__
    measured_reference: dict = field(default_factory=lambda: dict(MEASURED_REFERENCE))
    # not serialized: histograms and streams per sweep point, for writers and tests
    histograms: list = field(default_factory=list, repr=False)
    streams: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "version": self.version,
            "points": self.points,
            "fits": self.fits,
            "summary": self.summary,
            "link_budget": self.link_budget,
            "measured_reference": self.measured_reference,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"experiment: {self.experiment} (qcmux {self.version})",
                 "delay convention: t(C-band detector) - t(O-band detector)"]
        for p in self.points:
            lines.append(f"- L = {p['length_km']:g} km")
            for k in sorted(p):
                if k in ("length_km", "peaks", "histogram_csv"):
                    continue
                lines.append(f"    {k}: {_fmt(p[k])}")
        for k, v in sorted(self.fits.items()):
            lines.append(f"fit {k}: {_fmt(v)}")
        for k, v in sorted(self.summary.items()):
            lines.append(f"{k}: {_fmt(v)}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, dict):
        return ", ".join(f"{k}={_fmt(x)}" for k, x in sorted(v.items()))
    return str(v)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f) or math.isinf(f):
            return None
        return round(f, 6)
    return obj


def _shift_batch(b: PhotonBatch, dt: int) -> PhotonBatch:
    return b if dt == 0 else b.with_times(b.t + int(dt))


# --- fiber characterization ---------------------------------------------------

def simulate_characterization_point(cfg: ScenarioConfig, length: float, index: int = 0):
    """Co-propagate O/C-band pairs through ``length`` km; returns (O tags, C tags)."""
    rng = stage_rngs(cfg.seed, index)
    T = cfg.duration_ps
    fiber = cfg.fibers["link"].build(length)
    signal, herald = generate_pairs(cfg.spdc, T, rng["pairs"])
    out = propagate(PhotonBatch.concat([signal, herald]), fiber, cfg.widths, rng["link"])
    ports = wdm_split(out, cfg.wdm, rng["split"])
    o_port = cfg.wdm.port_of(cfg.spdc.signal_wavelength)
    c_port = cfg.wdm.other_port(o_port)
    tags_o = detect(ports[o_port], cfg.detectors["o_band"], T, rng["det_o"])
    tags_c = detect(ports[c_port], cfg.detectors["c_band"], T, rng["det_c"])
    return tags_o, tags_c


def _peak_sigmas(p: PeakReport) -> tuple[float, float]:
    n = max(p.net_counts, 1.0)
    bw = p.base_width / max(p.n_bins, 1)
    pos = max(p.rms_width, bw / math.sqrt(12.0)) / math.sqrt(n)
    width = max(p.fwhm_gaussian, bw) / math.sqrt(2.0 * n)
    return pos, width


def run_fiber_characterization(cfg: ScenarioConfig) -> RunReport:
    if cfg.experiment != Experiment.FIBER_CHARACTERIZATION:
        raise ConfigError("run_fiber_characterization needs experiment 'fiber_characterization'")
    if not cfg.sweep_km:
        raise ConfigError("fiber characterization needs a non-empty sweep_km")
    cc = cfg.correlator
    fiber1 = cfg.fibers["link"].build(1.0)
    lam_o, lam_c = cfg.spdc.signal_wavelength, cfg.spdc.herald_wavelength
    width_c = cfg.widths.get(float(lam_c))
    report = RunReport(Experiment.FIBER_CHARACTERIZATION.value, config=cfg.to_dict())
    xs, pos, pos_err, wid, wid_err, base = [], [], [], [], [], []
    for i, L in enumerate(cfg.lengths):
        tags_o, tags_c = simulate_characterization_point(cfg, L, i)
        hist = cross_correlate(tags_o, tags_c, cc.bin_width_ps, cc.window_ps)
        peak = peak_report(hist)
        point = {"length_km": L, "n_o": len(tags_o), "n_c": len(tags_c),
                 "expected_delay_ps": relative_group_delay(fiber1, lam_c, lam_o) * L,
                 "expected_broadening_ps": 0.0 if width_c is None else broadening_fwhm(fiber1, lam_c, width_c) * L}
        if peak is None or peak.integrated_counts < cc.min_coincidences:
            point["peak"] = None
            point["no_peak"] = True
        else:
            point["peak"] = peak.to_dict()
            point["no_peak"] = False
            sp, sw = _peak_sigmas(peak)
            xs.append(L)
            pos.append(peak.center_of_mass)
            pos_err.append(sp)
            wid.append(peak.fwhm_gaussian)
            wid_err.append(sw)
            base.append(peak.base_width)
        report.points.append(point)
        report.histograms.append(hist)
        report.streams.append((tags_o, tags_c))
    if len(set(xs)) < 2:
        raise StatisticsError("fewer than two sweep points produced a coincidence peak")
    s, b, e = fit_linear(xs, pos, pos_err)
    report.fits["delay_ps_per_km"] = {"slope": s, "intercept": b, "slope_error": e}
    s, b, e = fit_linear(xs, wid, wid_err)
    report.fits["fwhm_raw_ps_per_km"] = {"slope": s, "intercept": b, "slope_error": e}
    # chromatic part: remove the shortest fiber's width (coherence time, binning) in quadrature
    ref = int(np.argmin(xs))
    w0 = wid[ref]
    chrom = [(x, math.sqrt(max(w * w - w0 * w0, 0.0)), sw, w)
             for k, (x, w, sw) in enumerate(zip(xs, wid, wid_err)) if k != ref]
    chrom = [(x, wc, w * sw / wc) for x, wc, sw, w in chrom if wc > 0]
    if len(set(c[0] for c in chrom)) >= 2:
        s, b, e = fit_linear(*zip(*chrom))
        report.fits["broadening_fwhm_ps_per_km"] = {"slope": s, "intercept": b, "slope_error": e,
                                                    "instrument_fwhm_ps": w0}
    s, b, e = fit_linear(xs, base)
    report.fits["base_width_ps_per_km"] = {"slope": s, "intercept": b, "slope_error": e}
    report.summary["model_delay_slope_ps_per_km"] = relative_group_delay(fiber1, lam_c, lam_o)
    report.summary["model_broadening_slope_ps_per_km"] = (
        0.0 if width_c is None else broadening_fwhm(fiber1, lam_c, width_c))
    return report


# --- multiplexing ---------------------------------------------------------------

@dataclass
class MultiplexStreams:
    herald: EventStream
    o_band: EventStream
    c_band: EventStream
    classical_rate: float = 0.0


def simulate_multiplex_point(cfg: ScenarioConfig, length: float, index: int = 0,
                             block_signal: bool = False) -> MultiplexStreams:
    """Run the full multiplexing chain for one link length."""
    rng = stage_rngs(cfg.seed, index)
    T = cfg.duration_ps
    widths = cfg.widths
    signal, herald = generate_pairs(cfg.spdc, T, rng["pairs"])
    # heralds are detected before the converter, so blocking its input keeps them
    herald_tags = detect(herald, cfg.detectors["herald"], T, rng["herald_det"])
    pulses = trigger_pulses(herald_tags, cfg.clock, rng["clock"], duration=T)
    pulses = _shift_batch(pulses, cfg.clock_arm_delay_ps)
    if block_signal:
        signal = PhotonBatch.empty()
    converted = _shift_batch(qfc_convert(signal, cfg.qfc, T, rng["qfc"]), cfg.signal_arm_delay_ps)
    combined = wdm_combine(PhotonBatch.concat([converted, pulses]), cfg.wdm, rng["combine"])
    link = cfg.fibers["link"].build(length)
    out = propagate(combined, link, widths, rng["link"])
    classical_rate = len(pulses) / (T * 1e-12) if T else 0.0
    if cfg.raman_kappa > 0:
        raman = raman_noise(classical_rate, link, cfg.raman_kappa, T, rng["raman"], cfg.qfc.output_wavelength)
        out = PhotonBatch.concat([out, _shift_batch(raman, group_delay(link, cfg.qfc.output_wavelength))])
    ports = wdm_split(out, cfg.wdm, rng["split"])
    o_port = cfg.wdm.port_of(cfg.qfc.output_wavelength)
    c_port = cfg.wdm.port_of(cfg.clock.wavelength)
    o_photons = propagate(ports[o_port], cfg.fibers["o_delay"].build(), widths, rng["o_delay"])
    tags_o = detect(o_photons, cfg.detectors["o_band"], T, rng["det_o"])
    tags_c = detect(ports[c_port], cfg.detectors["c_band"], T, rng["det_c"])
    return MultiplexStreams(herald_tags, tags_o, tags_c, classical_rate)


def predicted_signal_gate(cfg: ScenarioConfig, length: float) -> Gate:
    """Delay range where laser-pulse clicks pair with converted photons, from the configured geometry.

    Widened on each side by the chromatic broadening of the clock pulse.
    """
    link = cfg.fibers["link"].build(length)
    o_delay = cfg.fibers["o_delay"].build()
    lam_o, lam_c = cfg.qfc.output_wavelength, cfg.clock.wavelength
    det_o, det_c = cfg.detectors["o_band"], cfg.detectors["c_band"]
    t_c = cfg.clock.electronic_delay + cfg.clock_arm_delay_ps + group_delay(link, lam_c) + det_c.delay
    t_o = cfg.signal_arm_delay_ps + group_delay(link, lam_o) + group_delay(o_delay, lam_o) + det_o.delay
    width = cfg.clock.pulse_width
    spread = 0.0
    w = cfg.widths.get(float(lam_c))
    if w is not None:
        spread += broadening_fwhm(link, lam_c, w)
    w = cfg.widths.get(float(lam_o))
    if w is not None:
        spread += broadening_fwhm(link, lam_o, w)
    margin = int(math.ceil(spread))
    return Gate(int(round(t_c - t_o)) - margin, int(round(width)) + 2 * margin)


def predicted_crosstalk_delay(cfg: ScenarioConfig) -> float:
    """Center of the leak auto-correlation peak: minus the O-line delay at the clock wavelength."""
    o_delay = cfg.fibers["o_delay"].build()
    det_o, det_c = cfg.detectors["o_band"], cfg.detectors["c_band"]
    return det_c.delay - det_o.delay - group_delay(o_delay, cfg.clock.wavelength)


def origin_fractions(streams: MultiplexStreams, lo: int, hi: int) -> dict:
    """Share of coincidences in [lo, hi) by (O-tag origin, C-tag origin)."""
    a, b = streams.o_band, streams.c_band
    ia, ib, _ = pair_indices(a, b, lo, hi)
    n = len(ia)
    if n == 0 or a.origins is None or b.origins is None:
        return {"pairs": n}
    oa, ob = a.origins[ia], b.origins[ib]
    leak = int(np.sum((oa == Origin.LEAK) & (ob == Origin.CLASSICAL)))
    sig = int(np.sum((oa == Origin.SIGNAL) & (ob == Origin.CLASSICAL)))
    return {"pairs": n, "leak_classical": leak / n, "signal_classical": sig / n}


def _classify(peaks, streams, cfg):
    """Pick (crosstalk, signal) among found peaks using origin bookkeeping."""
    crosstalk = signal = None
    best_leak = best_sig = 0.5
    fractions = []
    for p in peaks:
        f = origin_fractions(streams, p.start, p.stop)
        fractions.append(f)
        if f.get("leak_classical", 0.0) > best_leak:
            crosstalk, best_leak = p, f["leak_classical"]
        if f.get("signal_classical", 0.0) > best_sig:
            signal, best_sig = p, f["signal_classical"]
    if crosstalk is None and peaks:
        # no bookkeeping (or too mixed): nearest to the predicted leak position
        target = predicted_crosstalk_delay(cfg)
        near = min(peaks, key=lambda p: abs(p.center_of_mass - target))
        if abs(near.center_of_mass - target) < cfg.clock.pulse_width:
            crosstalk = near
    return crosstalk, signal, fractions


def _multiplex_point(cfg: ScenarioConfig, L: float, i: int, block: bool):
    cc = cfg.correlator
    streams = simulate_multiplex_point(cfg, L, i, block_signal=block)
    hist = cross_correlate(streams.o_band, streams.c_band, cc.bin_width_ps, cc.window_ps)
    peaks = find_peaks(hist, min_integrated=cc.min_coincidences)
    crosstalk, signal, fractions = _classify(peaks, streams, cfg)
    gate = cc.gate if cc.gate is not None else predicted_signal_gate(cfg, L)
    exclude = [(p.start, p.stop) for p in peaks]
    gc = gated_counts(streams.o_band, streams.c_band, gate, cc.window_ps, exclude)
    car_gate = car(hist, gate)
    point = {
        "length_km": L,
        "n_herald": len(streams.herald),
        "n_o": len(streams.o_band),
        "n_c": len(streams.c_band),
        "classical_photon_rate_per_s": streams.classical_rate,
        "peaks": [dict(p.to_dict(), origins=f) for p, f in zip(peaks, fractions)],
        "crosstalk_peak": None if crosstalk is None else crosstalk.to_dict(),
        "signal_peak": None if signal is None else signal.to_dict(),
        "gate": {"start_ps": gate.start, "width_ps": gate.width},
        "gate_counts": gc.signal,
        "accidental_estimate": gc.accidental_estimate,
        "accidental_gates": len(gc.accidental_gates),
        "car": gc.signal / gc.accidental_estimate if gc.accidental_estimate > 0 else None,
        "car_lower_bound": gc.accidental_estimate <= 0,
        "car_histogram": car_gate.value,
        "predicted_crosstalk_delay_ps": predicted_crosstalk_delay(cfg),
    }
    if crosstalk is not None and signal is not None:
        point["peak_separation_ps"] = signal.center_of_mass - crosstalk.center_of_mass
    return point, hist, streams


def _run_multiplex(cfg: ScenarioConfig, block: bool) -> RunReport:
    report = RunReport(cfg.experiment.value, config=cfg.to_dict())
    for i, L in enumerate(cfg.lengths):
        point, hist, streams = _multiplex_point(cfg, L, i, block)
        report.points.append(point)
        report.histograms.append(hist)
        report.streams.append(streams)
    ref = min(range(len(report.points)), key=lambda k: report.points[k]["length_km"])
    ref_peak = report.points[ref]["signal_peak"]
    link1 = cfg.fibers["link"].build(1.0)
    model_shift = relative_group_delay(link1, cfg.clock.wavelength, cfg.qfc.output_wavelength)
    report.summary["model_signal_shift_ps_per_km"] = model_shift
    for p in report.points:
        p["model_signal_shift_ps"] = model_shift * (p["length_km"] - report.points[ref]["length_km"])
        if ref_peak is not None and p["signal_peak"] is not None:
            p["signal_shift_ps"] = p["signal_peak"]["center_of_mass_ps"] - ref_peak["center_of_mass_ps"]
    Lmax = max(cfg.lengths)
    report.link_budget = linkbudget_summary(LinkBudgetInput(
        alpha_direct=2.0, alpha_converted=cfg.fibers["link"].loss[float(cfg.qfc.output_wavelength)],
        qfc_efficiency=cfg.qfc.efficiency, length=Lmax))
    return report


def run_multiplex(cfg: ScenarioConfig) -> RunReport:
    if cfg.experiment != Experiment.MULTIPLEX:
        raise ConfigError("run_multiplex needs experiment 'multiplex'")
    return _run_multiplex(cfg, block=False)


def run_multiplex_background(cfg: ScenarioConfig) -> RunReport:
    """Same chain with the converter input blocked; heralds and laser pulses still fire."""
    if cfg.experiment != Experiment.MULTIPLEX_BACKGROUND:
        raise ConfigError("run_multiplex_background needs experiment 'multiplex_background'")
    return _run_multiplex(cfg, block=True)


def run(cfg: ScenarioConfig) -> RunReport:
    return {
        Experiment.FIBER_CHARACTERIZATION: run_fiber_characterization,
        Experiment.MULTIPLEX: run_multiplex,
        Experiment.MULTIPLEX_BACKGROUND: run_multiplex_background,
    }[cfg.experiment](cfg)


def write_outputs(report: RunReport, out_dir, emit_tags: bool = False) -> Path:
    """Write report.json, report.txt and one histogram CSV per sweep point."""
    from .timetags import merge_streams, write_tags

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, (point, hist) in enumerate(zip(report.points, report.histograms)):
        name = f"hist_{k:02d}_{point['length_km']:g}km.csv"
        hist.to_csv(out / name)
        point["histogram_csv"] = name
        if emit_tags:
            s = report.streams[k]
            if isinstance(s, MultiplexStreams):
                named = {"herald": s.herald, "o_band": s.o_band, "c_band": s.c_band}
            else:
                named = {"o_band": s[0], "c_band": s[1]}
            for role, stream in named.items():
                tag_name = f"tags_{k:02d}_{point['length_km']:g}km_{role}.csv"
                write_tags(stream, out / tag_name)
                point.setdefault("tags_csv", {})[role] = tag_name
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    return out
