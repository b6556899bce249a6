import numpy as np
import pytest

from qcmux.timetags import EventStream


def binomial_ok(k, n, p, nsigma):
    return abs(k - n * p) <= nsigma * np.sqrt(n * p * (1 - p))


def poisson_ok(k, mean, nsigma):
    return abs(k - mean) <= nsigma * np.sqrt(mean)


def poisson_stream(rate_per_s, duration_ps, channel, rng):
    n = rng.poisson(rate_per_s * duration_ps * 1e-12)
    t = np.sort(rng.integers(0, duration_ps, n))
    return EventStream(np.full(n, channel), t, duration_ps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
