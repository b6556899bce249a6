"""Cross-correlation histograms, peak finding, gated counting and CAR.

Sign convention throughout: delay = t_b - t_a, so a positive delay means the
channel-b tag came later than the channel-a tag.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .timetags import EventStream


@dataclass(frozen=True, eq=False)
class Histogram:
    bin_width: int
    window: tuple[int, int]
    counts: np.ndarray
    n_a: int = 0
    n_b: int = 0
    duration: int = 0

    def __post_init__(self):
        lo, hi = self.window
        if self.bin_width <= 0 or hi <= lo or (hi - lo) % self.bin_width:
            raise ValueError(f"window {self.window} is not a positive multiple of bin width {self.bin_width}")
        counts = np.asarray(self.counts, dtype=np.int64)
        if len(counts) != (hi - lo) // self.bin_width:
            raise ValueError("counts length does not match window / bin_width")
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return (self.bin_width == other.bin_width and tuple(self.window) == tuple(other.window)
                and np.array_equal(self.counts, other.counts))

    @property
    def edges(self) -> np.ndarray:
        return self.window[0] + self.bin_width * np.arange(len(self.counts) + 1, dtype=np.int64)

    @property
    def centers(self) -> np.ndarray:
        return self.edges[:-1] + self.bin_width / 2.0

    def bin_of(self, delay: float) -> int:
        return int(np.floor((delay - self.window[0]) / self.bin_width))

    def to_csv(self, path) -> None:
        lines = ["delay_ps,counts"]
        lines.extend(f"{e},{c}" for e, c in zip(self.edges[:-1].tolist(), self.counts.tolist()))
        Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))

    @classmethod
    def from_csv(cls, path) -> "Histogram":
        rows = Path(path).read_text().strip().split("\n")
        if rows[0] != "delay_ps,counts":
            raise ValueError(f"{path}: bad histogram header")
        data = np.array([[int(x) for x in r.split(",")] for r in rows[1:]], dtype=np.int64).reshape(-1, 2)
        if len(data) == 0:
            raise ValueError(f"{path}: histogram has no bins")
        bw = int(data[1, 0] - data[0, 0]) if len(data) > 1 else 1
        return cls(bw, (int(data[0, 0]), int(data[-1, 0]) + bw), data[:, 1])


@dataclass(frozen=True)
class PeakReport:
    """One coincidence peak; positions in ps of delay (t_b - t_a).

    ``rms_width`` is the background-subtracted second moment over the peak
    run; ``fwhm_gaussian`` rescales it to the FWHM of a Gaussian.
    """

    center_of_mass: float
    base_width: int
    height: int
    integrated_counts: int
    background_level: float
    start: int = 0
    stop: int = 0
    rms_width: float = 0.0
    n_bins: int = 0

    @property
    def fwhm_gaussian(self) -> float:
        return 2.0 * np.sqrt(2.0 * np.log(2.0)) * self.rms_width

    @property
    def net_counts(self) -> float:
        return self.integrated_counts - self.background_level * self.n_bins

    def to_dict(self) -> dict:
        return {
            "center_of_mass_ps": round(float(self.center_of_mass), 3),
            "base_width_ps": int(self.base_width),
            "height": int(self.height),
            "integrated_counts": int(self.integrated_counts),
            "background_level": round(float(self.background_level), 6),
            "start_ps": int(self.start),
            "stop_ps": int(self.stop),
            "rms_width_ps": round(float(self.rms_width), 3),
            "fwhm_gaussian_ps": round(float(self.fwhm_gaussian), 3),
        }


@dataclass(frozen=True)
class Gate:
    start: int
    width: int

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("gate width must be > 0")

    @property
    def stop(self) -> int:
        return self.start + self.width

    def overlaps(self, lo: float, hi: float) -> bool:
        return self.start < hi and lo < self.stop


@dataclass(frozen=True)
class GatedCounts:
    signal: int
    accidental_estimate: float
    accidental_gates: tuple[int, ...] = ()  # start of each off-peak gate used

    def __iter__(self):
        return iter((self.signal, self.accidental_estimate))


@dataclass(frozen=True)
class CarResult:
    value: float
    signal: int
    accidental: float
    lower_bound: bool = False


def pair_delays(a: EventStream, b: EventStream, lo: int, hi: int) -> np.ndarray:
    """All delays t_b - t_a with lo <= delay < hi, found by a two-pointer sweep.

    For every tag in ``a`` the matching slice of ``b`` is located with two
    binary searches over the sorted times, which is the vectorised form of
    advancing two pointers through both streams.
    """
    ta, tb = a.t, b.t
    if len(ta) == 0 or len(tb) == 0:
        return np.empty(0, dtype=np.int64)
    first = np.searchsorted(tb, ta + lo, side="left")
    last = np.searchsorted(tb, ta + hi, side="left")
    n = last - first
    total = int(n.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    owner = np.repeat(np.arange(len(ta)), n)
    # position of each pair inside its owner's slice
    offsets = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
    return tb[first[owner] + offsets] - ta[owner]


def pair_indices(a: EventStream, b: EventStream, lo: int, hi: int):
    """Like :func:`pair_delays` but returns (index_a, index_b, delay)."""
    ta, tb = a.t, b.t
    if len(ta) == 0 or len(tb) == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e, e
    first = np.searchsorted(tb, ta + lo, side="left")
    last = np.searchsorted(tb, ta + hi, side="left")
    n = last - first
    total = int(n.sum())
    ia = np.repeat(np.arange(len(ta)), n)
    ib = first[ia] + (np.arange(total) - np.repeat(np.cumsum(n) - n, n))
    return ia, ib, tb[ib] - ta[ia]


def cross_correlate(a: EventStream, b: EventStream, bin_width: int, window: tuple[int, int]) -> Histogram:
    """Histogram of all pairwise delays t_b - t_a inside [window[0], window[1])."""
    lo, hi = int(window[0]), int(window[1])
    bin_width = int(bin_width)
    if hi <= lo:
        raise ValueError("correlation window is empty")
    if (hi - lo) % bin_width:
        raise ValueError("window length must be a multiple of the bin width")
    d = pair_delays(a, b, lo, hi)
    counts = np.bincount((d - lo) // bin_width, minlength=(hi - lo) // bin_width)
    return Histogram(bin_width, (lo, hi), counts, len(a), len(b), max(a.duration, b.duration))


def brute_force_correlate(a: EventStream, b: EventStream, bin_width: int, window: tuple[int, int]) -> Histogram:
    """O(n*m) reference implementation, for testing."""
    lo, hi = window
    counts = [0] * ((hi - lo) // bin_width)
    for x in a.t.tolist():
        for y in b.t.tolist():
            d = y - x
            if lo <= d < hi:
                counts[(d - lo) // bin_width] += 1
    return Histogram(bin_width, (lo, hi), counts, len(a), len(b), max(a.duration, b.duration))


def _threshold(background: float) -> float:
    # variance floor of one count keeps empty backgrounds from flagging every bin
    return background + 5.0 * np.sqrt(max(background, 1.0))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, stop) index ranges of True runs."""
    padded = np.concatenate([[0], mask.view(np.int8), [0]])
    d = np.diff(padded)
    return list(zip(np.flatnonzero(d == 1).tolist(), np.flatnonzero(d == -1).tolist()))


def estimate_background(hist: Histogram, max_iter: int = 10) -> tuple[float, list[tuple[int, int]]]:
    """Median background of bins outside peak runs, iterated to self-consistency."""
    counts = hist.counts
    if len(counts) == 0:
        return 0.0, []
    bg = float(np.median(counts))
    runs: list[tuple[int, int]] = []
    for _ in range(max_iter):
        runs = _runs(counts > _threshold(bg))
        outside = np.ones(len(counts), dtype=bool)
        for s, e in runs:
            outside[s:e] = False
        new_bg = float(np.median(counts[outside])) if outside.any() else bg
        if new_bg == bg:
            break
        bg = new_bg
    runs = _runs(counts > _threshold(bg))
    return bg, runs


def _report(hist: Histogram, s: int, e: int, bg: float) -> PeakReport:
    c = hist.counts[s:e].astype(float)
    x = hist.centers[s:e]
    net = np.clip(c - bg, 0.0, None)
    w = net if net.sum() > 0 else c
    com = float(np.sum(w * x) / np.sum(w))
    rms = float(np.sqrt(np.sum(w * (x - com) ** 2) / np.sum(w)))
    return PeakReport(
        center_of_mass=com,
        base_width=(e - s) * hist.bin_width,
        height=int(c.max()),
        integrated_counts=int(c.sum()),
        background_level=bg,
        start=int(hist.edges[s]),
        stop=int(hist.edges[e]),
        rms_width=rms,
        n_bins=e - s,
    )


def find_peaks(hist: Histogram, min_integrated: int = 0) -> list[PeakReport]:
    """All disjoint runs of bins above background + 5 sigma, ordered by delay."""
    bg, runs = estimate_background(hist)
    peaks = [_report(hist, s, e, bg) for s, e in runs]
    return [p for p in peaks if p.integrated_counts >= min_integrated]


def peak_report(hist: Histogram, search_region: Optional[tuple[int, int]] = None) -> Optional[PeakReport]:
    """Peak containing the maximum bin of ``search_region``; None if nothing clears the threshold."""
    lo, hi = search_region if search_region is not None else hist.window
    if lo < hist.window[0] or hi > hist.window[1] or hi <= lo:
        raise ValueError(f"search region {search_region} outside histogram window {hist.window}")
    i0 = max(hist.bin_of(lo), 0)
    i1 = min(hist.bin_of(hi - 1) + 1, len(hist.counts))
    bg, runs = estimate_background(hist)
    k = i0 + int(np.argmax(hist.counts[i0:i1]))
    if hist.counts[k] <= _threshold(bg):
        return None
    for s, e in runs:
        if s <= k < e:
            return _report(hist, s, e, bg)
    return None  # unreachable: every above-threshold bin lies in a run


def _count_in(delays_sorted: np.ndarray, lo: int, hi: int) -> int:
    return int(np.searchsorted(delays_sorted, hi, side="left") - np.searchsorted(delays_sorted, lo, side="left"))


def off_peak_gates(gate: Gate, window: tuple[int, int], exclude: Sequence[tuple[float, float]] = (),
                   n_min: int = 10) -> list[Gate]:
    """Tile the window with gates of the same width that avoid ``gate`` and every excluded interval."""
    blocked = [(gate.start, gate.stop)] + [tuple(x) for x in exclude]
    gates = []
    start = int(window[0])
    while start + gate.width <= window[1]:
        g = Gate(start, gate.width)
        hit = [hi for lo, hi in blocked if g.overlaps(lo, hi)]
        if hit:
            # slide past the blocking interval
            start = max(start + 1, int(np.ceil(max(hit))))
            continue
        gates.append(g)
        start += gate.width
    if len(gates) < n_min:
        raise ValueError(f"only {len(gates)} off-peak gates fit in window {window}; need {n_min}")
    return gates


def gated_counts(a: EventStream, b: EventStream, gate: Gate, window: Optional[tuple[int, int]] = None,
                 exclude: Sequence[tuple[float, float]] = ()) -> GatedCounts:
    """Pairs with delay in [gate.start, gate.stop) and the mean over off-peak gates.

    Off-peak gates tile ``window`` (default: the signal gate +- 50 gate widths)
    and are slid past the signal gate and any ``exclude`` interval.
    """
    if window is None:
        window = (gate.start - 50 * gate.width, gate.stop + 50 * gate.width)
    lo = min(window[0], gate.start)
    hi = max(window[1], gate.stop)
    d = np.sort(pair_delays(a, b, lo, hi))
    signal = _count_in(d, gate.start, gate.stop)
    gates = off_peak_gates(gate, window, exclude)
    acc = float(np.mean([_count_in(d, g.start, g.stop) for g in gates]))
    return GatedCounts(signal, acc, tuple(g.start for g in gates))


def hist_gate_counts(hist: Histogram, gate: Gate) -> int:
    """Counts in the bins whose centers fall inside the gate."""
    c = hist.centers
    return int(hist.counts[(c >= gate.start) & (c < gate.stop)].sum())


def car(hist: Histogram, gate: Gate) -> CarResult:
    """Coincidence-to-accidental ratio of ``gate`` against the histogram's off-peak background."""
    if gate.start < hist.window[0] or gate.stop > hist.window[1]:
        raise ValueError("gate lies outside the histogram window")
    signal = hist_gate_counts(hist, gate)
    _, runs = estimate_background(hist)
    c = hist.centers
    outside = ~((c >= gate.start) & (c < gate.stop))
    for s, e in runs:
        outside[s:e] = False
    per_bin = float(hist.counts[outside].mean()) if outside.any() else 0.0
    n_gate_bins = int(((c >= gate.start) & (c < gate.stop)).sum())
    accidental = per_bin * n_gate_bins
    if accidental <= 0:
        return CarResult(float(signal), signal, 0.0, lower_bound=True)
    return CarResult(signal / accidental, signal, accidental)
