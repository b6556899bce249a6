import numpy as np
import pytest

from qcmux.optics import FiberSpec
from qcmux.sources import ClockPulseSpec, QfcSpec, SpdcSpec, generate_pairs, qfc_convert, raman_noise, trigger_pulses
from qcmux.timetags import EventStream, Origin, PhotonBatch

from conftest import binomial_ok, poisson_ok

SECOND = 10 ** 12


def test_pairs_zero_duration(rng):
    s, h = generate_pairs(SpdcSpec(1e5), 0, rng)
    assert len(s) == len(h) == 0


def test_pair_count_is_poisson(rng):
    s, h = generate_pairs(SpdcSpec(1e5), SECOND, rng)
    assert len(s) == len(h)
    assert poisson_ok(len(h), 1e5, 3)
    assert np.all(np.diff(h.t) >= 0)
    assert h.t.min() >= 0 and s.t.max() <= SECOND
    assert np.all(s.origin == Origin.SIGNAL) and np.all(h.origin == Origin.HERALD)


def test_pair_time_offset_has_coherence_time_scale(rng):
    s, h = generate_pairs(SpdcSpec(1e5, coherence_time=5.0), SECOND, rng)
    d = np.abs(s.t - h.t)
    # integer rounding of a Laplace(5 ps) offset keeps the mean within a few percent of 5 ps
    assert np.mean(d) == pytest.approx(5.0, abs=0.15)


def test_pairs_are_index_aligned(rng):
    s, h = generate_pairs(SpdcSpec(1e4, coherence_time=0.0), SECOND, rng)
    assert np.array_equal(s.t, h.t)


def test_qfc_identity_conversion(rng):
    b = PhotonBatch.uniform(854.0, np.arange(10), Origin.SIGNAL)
    out = qfc_convert(b, QfcSpec(1.0, 1310.0, 0.0), SECOND, rng)
    assert np.array_equal(out.t, b.t)
    assert np.all(out.wavelength == 1310.0)


def test_qfc_efficiency_binomial(rng):
    n = 10 ** 6
    b = PhotonBatch.uniform(854.0, np.zeros(n, np.int64), Origin.SIGNAL)
    out = qfc_convert(b, QfcSpec(0.08, 1310.0, 0.0), SECOND, rng)
    assert binomial_ok(len(out), n, 0.08, 3)
    assert binomial_ok(len(out), n, 0.08, 5)


def test_qfc_noise_rate(rng):
    out = qfc_convert(PhotonBatch.empty(), QfcSpec(0.08, 1310.0, 1e3), SECOND, rng)
    assert poisson_ok(len(out), 1e3, 3)
    assert np.all(out.origin == Origin.NOISE)
    assert out.t.min() >= 0 and out.t.max() <= SECOND


def test_no_heralds_no_pulses(rng):
    out = trigger_pulses(EventStream.empty(SECOND), ClockPulseSpec(mean_photons=5.0), rng)
    assert len(out) == 0


def test_pulse_support_is_rectangular(rng):
    spec = ClockPulseSpec(pulse_width=30_000, electronic_delay=1_000, mean_photons=10_000)
    out = trigger_pulses(EventStream.from_tags([(0, 0)], SECOND), spec, rng)
    assert len(out) > 9000
    assert out.t.min() >= 1_000 and out.t.max() <= 31_000
    # roughly flat: each third of the pulse holds about a third of the photons
    thirds = np.histogram(out.t, bins=[1_000, 11_000, 21_000, 31_001])[0]
    assert np.all(np.abs(thirds / len(out) - 1 / 3) < 0.03)


def test_pulse_photon_count_poisson(rng):
    n = 10 ** 4
    heralds = EventStream(np.zeros(n, int), np.arange(n) * 10 ** 6, n * 10 ** 6)
    out = trigger_pulses(heralds, ClockPulseSpec(mean_photons=2.0), rng)
    assert poisson_ok(len(out), 2e4, 3)
    assert np.all(out.origin == Origin.CLASSICAL)


def test_pulses_never_precede_trigger_delay(rng):
    heralds = EventStream(np.zeros(50, int), np.sort(rng.integers(0, 10 ** 9, 50)), 10 ** 9)
    spec = ClockPulseSpec(electronic_delay=5_000, mean_photons=20)
    out = trigger_pulses(heralds, spec, rng)
    nearest = np.searchsorted(heralds.t, out.t - 5_000, side="right") - 1
    assert np.all(nearest >= 0)
    assert np.all(out.t - heralds.t[nearest] >= 5_000)


def test_cw_background_floor(rng):
    spec = ClockPulseSpec(mean_photons=0.0, cw_background_rate=500.0)
    out = trigger_pulses(EventStream.empty(SECOND), spec, rng)
    assert poisson_ok(len(out), 500, 3)
    assert np.all(out.origin == Origin.NOISE)


def test_raman_noise(rng):
    f = FiberSpec(1.0, {1310: 0.25}, {1310: 1.4682})
    assert len(raman_noise(1e6, f, 0.0, SECOND, rng)) == 0
    out = raman_noise(1e6, f, 1e-4, SECOND, rng)
    assert poisson_ok(len(out), 100, 3)
    assert np.all(out.wavelength == 1310.0)
    n1 = np.mean([len(raman_noise(1e6, f, 1e-3, SECOND, rng)) for _ in range(20)])
    n2 = np.mean([len(raman_noise(1e6, f.with_length(2.0), 1e-3, SECOND, rng)) for _ in range(20)])
    assert n2 / n1 == pytest.approx(2.0, rel=0.05)


def test_spec_validation():
    with pytest.raises(ValueError):
        SpdcSpec(0)
    with pytest.raises(ValueError):
        QfcSpec(1.5)
    with pytest.raises(ValueError):
        ClockPulseSpec(pulse_width=0)
