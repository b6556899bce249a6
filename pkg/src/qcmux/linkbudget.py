"""Closed-form comparison of direct 854 nm transmission against conversion to the O-band.

All quantities are power ratios in dB (10 log10). Detector efficiencies are
left out unless ``include_detectors`` is set, since the comparison concerns
channel transmission.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class LinkBudgetInput:
    alpha_direct: float = 2.0  # dB/km at 854 nm
    alpha_converted: float = 0.25  # dB/km at 1310 nm
    qfc_efficiency: float = 0.08
    length: float = 20.0  # km
    include_detectors: bool = False
    eta_direct: float = 0.30
    eta_converted: float = 0.25

    def __post_init__(self):
        if self.alpha_direct < 0 or self.alpha_converted < 0:
            raise ValueError("attenuation coefficients must be >= 0")
        if not 0.0 < self.qfc_efficiency <= 1.0:
            raise ValueError("qfc_efficiency must be in (0, 1]")
        if self.length < 0:
            raise ValueError("length must be >= 0")
        if self.include_detectors and not (0 < self.eta_direct <= 1 and 0 < self.eta_converted <= 1):
            raise ValueError("detector efficiencies must be in (0, 1]")


def _to_db(p: float) -> float:
    return -10.0 * math.log10(p)


def _detector_db(inp: LinkBudgetInput) -> tuple[float, float]:
    if not inp.include_detectors:
        return 0.0, 0.0
    return _to_db(inp.eta_direct), _to_db(inp.eta_converted)


def direct_loss_db(inp: LinkBudgetInput) -> float:
    return inp.alpha_direct * inp.length + _detector_db(inp)[0]


def converted_loss_db(inp: LinkBudgetInput) -> float:
    return _to_db(inp.qfc_efficiency) + inp.alpha_converted * inp.length + _detector_db(inp)[1]


def break_even_length(inp: LinkBudgetInput) -> float:
    """Fiber length where both routes lose the same; ``math.inf`` if conversion never wins."""
    slope = inp.alpha_direct - inp.alpha_converted
    if slope <= 0:
        return math.inf
    det_direct, det_conv = _detector_db(inp)
    return (_to_db(inp.qfc_efficiency) + det_conv - det_direct) / slope


def advantage_db(inp: LinkBudgetInput) -> float:
    """How many dB less the converted route loses than direct transmission."""
    return direct_loss_db(inp) - converted_loss_db(inp)


def summary(inp: LinkBudgetInput) -> dict:
    be = break_even_length(inp)
    return {
        "input": asdict(inp),
        "direct_loss_db": round(direct_loss_db(inp), 6),
        "converted_loss_db": round(converted_loss_db(inp), 6),
        "advantage_db": round(advantage_db(inp), 6),
        "break_even_km": None if math.isinf(be) else round(be, 6),
    }


def table(inp: LinkBudgetInput, lengths) -> list[dict]:
    rows = []
    for L in lengths:
        x = LinkBudgetInput(**{**asdict(inp), "length": float(L)})
        rows.append({"length_km": float(L), "direct_loss_db": direct_loss_db(x),
                     "converted_loss_db": converted_loss_db(x), "advantage_db": advantage_db(x)})
    return rows
