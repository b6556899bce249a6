"""Single-photon detector model: efficiency, dark counts, jitter, non-paralyzable dead time."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .optics import FWHM_PER_SIGMA
from .sources import poisson_times
from .timetags import EventStream, Origin, PhotonBatch

DEAD_TIME_MODELS = ("non-paralyzable",)


@dataclass(frozen=True)
class DetectorSpec:
    """One detector channel.

    ``delay`` is a fixed cable/electronics latency added to every tag. Dark
    rate defaults are operational guesses, not measured values.
    """

    channel: int
    efficiency: Mapping[float, float]
    dark_rate: float = 100.0  # counts/s
    jitter_fwhm: float = 0.0  # ps
    dead_time: float = 10_000.0  # ps
    delay: float = 0.0  # ps
    dead_time_model: str = "non-paralyzable"

    def __post_init__(self):
        object.__setattr__(self, "efficiency", {float(k): float(v) for k, v in dict(self.efficiency).items()})
        if any(not 0.0 <= v <= 1.0 for v in self.efficiency.values()):
            raise ValueError("detector efficiencies must be in [0, 1]")
        if self.dark_rate < 0 or self.dead_time < 0 or self.jitter_fwhm < 0:
            raise ValueError("dark_rate, dead_time and jitter must be >= 0")
        if self.dead_time_model not in DEAD_TIME_MODELS:
            raise ValueError(f"unsupported dead time model {self.dead_time_model!r}")

    def efficiency_at(self, wavelength: float) -> float:
        try:
            return self.efficiency[float(wavelength)]
        except KeyError:
            raise KeyError(f"detector {self.channel} has no efficiency for {wavelength} nm") from None


def dead_time_mask(t: np.ndarray, dead_time: int) -> np.ndarray:
    """Greedy non-paralyzable filter over sorted times; True where a tag survives."""
    n = len(t)
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    if dead_time <= 0:
        keep[:] = True
        return keep
    # a tag whose gap to its predecessor is >= dead_time is always accepted;
    # only runs of closely spaced tags need the sequential scan
    close = np.diff(t) < dead_time
    keep[0] = True
    keep[1:] = ~close
    starts = np.flatnonzero(np.diff(np.concatenate([[0], close.view(np.int8), [0]])) == 1)
    ends = np.flatnonzero(np.diff(np.concatenate([[0], close.view(np.int8), [0]])) == -1)
    tl = t.tolist()
    for s, e in zip(starts.tolist(), ends.tolist()):
        # tags s..e form a cluster; tag s is accepted
        last = tl[s]
        for j in range(s + 1, e + 1):
            if tl[j] - last >= dead_time:
                keep[j] = True
                last = tl[j]
    return keep


def apply_dead_time(tags: EventStream, dead_time: float) -> EventStream:
    """Drop tags that fall inside (t, t + dead_time) of the previous accepted tag.

    Applied to all tags of the stream together, so pass one channel at a time.
    """
    keep = dead_time_mask(tags.t, int(round(dead_time)))
    return EventStream(
        tags.channel[keep], tags.t[keep], tags.duration,
        None if tags.origins is None else tags.origins[keep], check=False,
    )


def detect(photons: PhotonBatch, spec: DetectorSpec, duration: int, rng: np.random.Generator) -> EventStream:
    """Turn photon arrivals into a time-tag stream on ``spec.channel``.

    Clicks outside the acquisition window [0, duration] are not recorded.
    """
    eff = np.zeros(len(photons))
    for wl in np.unique(photons.wavelength):
        eff[photons.wavelength == wl] = spec.efficiency_at(wl)
    clicked = photons.take(rng.random(len(photons)) < eff)
    dark = poisson_times(spec.dark_rate, duration, rng)
    t = np.concatenate([clicked.t, dark])
    origins = np.concatenate([clicked.origin, np.full(len(dark), int(Origin.NOISE), np.int8)])
    if spec.jitter_fwhm > 0:
        t = t + np.rint(rng.normal(0.0, spec.jitter_fwhm / FWHM_PER_SIGMA, len(t))).astype(np.int64)
    t = t + int(round(spec.delay))
    inside = (t >= 0) & (t <= duration)
    t, origins = t[inside], origins[inside]
    order = np.argsort(t, kind="stable")
    t, origins = t[order], origins[order]
    keep = dead_time_mask(t, int(round(spec.dead_time)))
    t, origins = t[keep], origins[keep]
    return EventStream(np.full(len(t), spec.channel), t, duration, origins, check=False)
