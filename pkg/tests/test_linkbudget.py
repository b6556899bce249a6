import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcmux.linkbudget import (LinkBudgetInput, advantage_db, break_even_length, converted_loss_db,
                              direct_loss_db, summary, table)
from qcmux.optics import FiberSpec, propagate
from qcmux.sources import QfcSpec, qfc_convert
from qcmux.timetags import Origin, PhotonBatch


def test_break_even_default():
    assert break_even_length(LinkBudgetInput()) == pytest.approx(6.268057, abs=1e-6)


def test_break_even_with_lower_efficiency():
    assert break_even_length(LinkBudgetInput(qfc_efficiency=0.079)) == pytest.approx(6.2993, abs=1e-4)


def test_advantage_values():
    assert advantage_db(LinkBudgetInput(length=20)) == pytest.approx(24.0309, abs=1e-4)
    assert advantage_db(LinkBudgetInput(length=10)) == pytest.approx(6.5309, abs=1e-4)
    assert advantage_db(LinkBudgetInput(length=0)) == pytest.approx(10 * math.log10(0.08), abs=1e-9)


def test_advantage_is_zero_at_break_even():
    L = break_even_length(LinkBudgetInput())
    assert abs(advantage_db(LinkBudgetInput(length=L))) < 1e-9


@given(st.floats(0.01, 0.9), st.floats(0, 100))
def test_advantage_affine_in_length(eff, L):
    a0 = advantage_db(LinkBudgetInput(qfc_efficiency=eff, length=L))
    a1 = advantage_db(LinkBudgetInput(qfc_efficiency=eff, length=L + 1))
    assert a1 - a0 == pytest.approx(1.75, abs=1e-9)


def test_never_break_even():
    inp = LinkBudgetInput(alpha_direct=0.2, alpha_converted=0.25)
    assert break_even_length(inp) == math.inf
    assert summary(inp)["break_even_km"] is None


def test_detectors_shift_break_even():
    with_det = LinkBudgetInput(include_detectors=True)
    expected = (-10 * math.log10(0.08 * 0.25 / 0.30)) / 1.75
    assert break_even_length(with_det) == pytest.approx(expected)


def test_summary_and_table():
    s = summary(LinkBudgetInput())
    assert s["direct_loss_db"] == 40.0
    assert s["converted_loss_db"] == pytest.approx(5 + 10.969100, abs=1e-6)
    rows = table(LinkBudgetInput(), [0, 20])
    assert rows[1]["advantage_db"] == pytest.approx(24.0309, abs=1e-4)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        LinkBudgetInput(qfc_efficiency=0)
    with pytest.raises(ValueError):
        LinkBudgetInput(length=-1)


@pytest.mark.parametrize("L", [2.0, 10.0])
def test_monte_carlo_agrees_with_closed_form(L):
    rng = np.random.default_rng(int(L))
    n = 2 * 10 ** 6
    photons = PhotonBatch.uniform(854.0, np.zeros(n, np.int64), Origin.SIGNAL)
    loss = {854.0: 2.0, 1310.0: 0.25}
    fiber = FiberSpec(L, loss, {854.0: 1.45, 1310.0: 1.4682})
    direct = len(propagate(photons, fiber, None, rng))
    converted = len(propagate(qfc_convert(photons, QfcSpec(0.08, 1310.0, 0.0), 10 ** 12, rng), fiber, None, rng))
    inp = LinkBudgetInput(length=L)
    p_direct = 10 ** (-direct_loss_db(inp) / 10)
    p_conv = 10 ** (-converted_loss_db(inp) / 10)
    assert abs(direct - n * p_direct) <= 5 * math.sqrt(n * p_direct)
    assert abs(converted - n * p_conv) <= 5 * math.sqrt(n * p_conv)
    measured = 10 * math.log10(converted / direct)
    sigma_db = 10 / math.log(10) * math.sqrt(1 / converted + 1 / direct)
    assert abs(measured - advantage_db(inp)) <= 5 * sigma_db
