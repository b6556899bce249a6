"""Mean detector clicks per laser pulse as the mean photon number grows."""
import numpy as np

from qcmux.detectors import DetectorSpec, detect
from qcmux.sources import ClockPulseSpec, trigger_pulses
from qcmux.timetags import EventStream

rng = np.random.default_rng(1)
n, period = 20_000, 1_000_000
heralds = EventStream(np.zeros(n, int), np.arange(n) * period, n * period)
det = DetectorSpec(2, {1550.0: 1.0}, dark_rate=0.0, dead_time=10_000)
print("mu    clicks/pulse  (30 ns pulse, 10 ns dead time)")
for mu in (1, 3, 5, 10, 15, 20, 30, 50, 100):
    photons = trigger_pulses(heralds, ClockPulseSpec(pulse_width=30_000, mean_photons=mu), rng)
    print(f"{mu:<5} {len(detect(photons, det, n * period, rng)) / n:.3f}")
