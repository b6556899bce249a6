import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcmux.cli import main
from qcmux.config import (ConfigError, Experiment, config_from_dict, default_characterization, default_multiplex,
                          dump_config, load_config)
from qcmux.optics import transmission_probability
from qcmux.scenario import (StatisticsError, fit_linear, run, run_fiber_characterization, simulate_multiplex_point,
                            stage_rngs, write_outputs)
from qcmux.timetags import Origin


def short_multiplex(background=False, seconds=1.0):
    cfg = default_multiplex(seed=7, background=background)
    return cfg.replace(duration_ps=int(seconds * 10 ** 12))


# --- fitting --------------------------------------------------------------------

def test_fit_exact_line():
    s, b, e = fit_linear([0, 1, 2], [1, 3, 5])
    assert (s, b) == pytest.approx((2.0, 1.0))
    assert e == pytest.approx(0.0, abs=1e-12)


def test_fit_needs_two_distinct_x():
    with pytest.raises(StatisticsError):
        fit_linear([1, 1], [2, 3])


def test_fit_weighted_ignores_noisy_point():
    s, _, _ = fit_linear([0, 1, 2, 3], [0, 1, 2, 30], sigma=[0.01, 0.01, 0.01, 1e6])
    assert s == pytest.approx(1.0, abs=1e-6)


def test_fit_slope_error_has_correct_coverage():
    rng = np.random.default_rng(5)
    x = np.array([0.002, 2, 5, 10, 20])
    sigma = np.array([1.0, 2.0, 2.0, 3.0, 4.0])
    inside = 0
    for _ in range(2000):
        y = 1861 * x + rng.normal(0, sigma)
        s, _, e = fit_linear(x, y, sigma)
        inside += abs(s - 1861) <= e
    assert inside / 2000 == pytest.approx(0.683, abs=0.03)


# --- rng and config ---------------------------------------------------------------

def test_stage_rngs_are_reproducible_and_independent():
    a, b = stage_rngs(3, 0), stage_rngs(3, 0)
    assert a["pairs"].random() == b["pairs"].random()
    assert stage_rngs(3, 0)["pairs"].random() != stage_rngs(3, 1)["pairs"].random()
    assert stage_rngs(3, 0)["pairs"].random() != stage_rngs(3, 0)["qfc"].random()


@pytest.mark.parametrize("cfg", [default_characterization(), default_multiplex(), default_multiplex(background=True)])
def test_config_json_roundtrip(tmp_path, cfg):
    dump_config(cfg, tmp_path / "c.json")
    back = load_config(tmp_path / "c.json")
    assert back == cfg
    dump_config(back, tmp_path / "d.json")
    assert (tmp_path / "c.json").read_bytes() == (tmp_path / "d.json").read_bytes()


def test_config_rejects_unknown_keys_and_missing_seed():
    d = default_multiplex().to_dict()
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({**d, "colour": "blue"})
    with pytest.raises(ConfigError):
        config_from_dict({**d, "clock": {**d["clock"], "shape": "square"}})
    d.pop("seed")
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict(d)


def test_config_rejects_uncovered_channel():
    d = default_multiplex().to_dict()
    d["clock"]["wavelength"] = 1490.0
    with pytest.raises(ConfigError):
        config_from_dict(d)


@given(st.integers(0, 2 ** 64 - 1))
def test_seed_range_accepted(seed):
    assert default_multiplex(seed=seed).seed == seed


# --- end-to-end -------------------------------------------------------------------

def test_determinism_byte_identical(tmp_path):
    cfg = short_multiplex(seconds=0.5)
    for name in ("a", "b"):
        write_outputs(run(cfg), tmp_path / name, emit_tags=True)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "report.json" in files and any(f.startswith("hist_") for f in files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_different_seeds_differ():
    cfg = short_multiplex(seconds=0.2)
    a = simulate_multiplex_point(cfg, 0.002)
    b = simulate_multiplex_point(cfg.replace(seed=8), 0.002)
    assert a.o_band != b.o_band


def test_origin_accounting():
    report = run(short_multiplex(seconds=2.0))
    p = report.points[0]
    ct = next(x for x in p["peaks"] if x["center_of_mass_ps"] == p["crosstalk_peak"]["center_of_mass_ps"])
    sig = next(x for x in p["peaks"] if x["center_of_mass_ps"] == p["signal_peak"]["center_of_mass_ps"])
    assert ct["origins"]["leak_classical"] >= 0.95
    assert sig["origins"]["signal_classical"] >= 0.95


def test_pipeline_rate_consistency():
    cfg = short_multiplex(seconds=2.0)
    L = 20.0
    s = simulate_multiplex_point(cfg, L)
    n_signal = int(np.sum(s.o_band.origins == Origin.SIGNAL))
    il = 10 ** (-cfg.wdm.insertion_loss / 10)
    p = (cfg.qfc.efficiency * il * transmission_probability(cfg.fibers["link"].build(L), 1310.0)
         * (1 - cfg.wdm.leak_probability) * il * transmission_probability(cfg.fibers["o_delay"].build(), 1310.0)
         * cfg.detectors["o_band"].efficiency_at(1310.0))
    expected = cfg.spdc.pair_rate * cfg.duration_ps * 1e-12 * p
    # dead-time losses at a few hundred counts per second are far below the Poisson error
    assert abs(n_signal - expected) <= 5 * math.sqrt(expected)


def test_background_keeps_crosstalk_and_removes_signal():
    sig = run(short_multiplex(seconds=2.0).replace(sweep_km=(0.002,)))
    bg = run(short_multiplex(background=True, seconds=2.0).replace(sweep_km=(0.002,)))
    a, b = sig.points[0]["crosstalk_peak"]["integrated_counts"], bg.points[0]["crosstalk_peak"]["integrated_counts"]
    assert abs(a - b) <= 5 * math.sqrt(a + b)
    p = bg.points[0]
    assert abs(p["gate_counts"] - p["accidental_estimate"]) <= 5 * math.sqrt(max(p["accidental_estimate"], 1.0))
    assert bg.points[0]["signal_peak"] is None


def test_single_zero_length_sweep_is_statistics_error():
    cfg = default_characterization().replace(sweep_km=(0.0,), duration_ps=10 ** 10)
    with pytest.raises(StatisticsError):
        run_fiber_characterization(cfg)


def test_wrong_experiment_is_config_error():
    with pytest.raises(ConfigError):
        run_fiber_characterization(default_multiplex())


# --- CLI ----------------------------------------------------------------------------

def test_cli_linkbudget(tmp_path, capsys):
    assert main(["linkbudget", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "linkbudget.json").read_text())
    assert doc["break_even_km"] == pytest.approx(6.268057, abs=1e-6)
    assert "break-even" in capsys.readouterr().out


def test_cli_config_error_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**default_multiplex().to_dict(), "bogus": 1}))
    assert main(["multiplex", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    (tmp_path / "broken.json").write_text("{")
    assert main(["characterize", "--config", str(tmp_path / "broken.json"), "--out", str(tmp_path)]) == 1


def test_cli_statistics_error_exit_2(tmp_path):
    cfg = default_characterization().replace(sweep_km=(0.0,), duration_ps=10 ** 10)
    dump_config(cfg, tmp_path / "c.json")
    assert main(["characterize", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 2


def test_cli_simulate_and_correlate_offline(tmp_path):
    cfg = short_multiplex(seconds=1.0).replace(sweep_km=(0.002,))
    dump_config(cfg, tmp_path / "c.json")
    out = tmp_path / "run"
    assert main(["multiplex", "--config", str(tmp_path / "c.json"), "--out", str(out), "--emit-tags"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["experiment"] == Experiment.MULTIPLEX.value
    tags = report["points"][0]["tags_csv"]
    off = tmp_path / "off"
    assert main(["correlate", str(out / tags["o_band"]), str(out / tags["c_band"]), "--out", str(off),
                 "--min-counts", "50"]) == 0
    peaks = json.loads((off / "peaks.json").read_text())["peaks"]
    online = [p["center_of_mass_ps"] for p in report["points"][0]["peaks"]]
    assert [p["center_of_mass_ps"] for p in peaks] == online


def test_cli_seed_override_and_dump(tmp_path):
    assert main(["background", "--seed", "99", "--dump-config", "--out", str(tmp_path)]) == 0
    cfg = load_config(tmp_path / "config.json")
    assert cfg.seed == 99 and cfg.experiment == Experiment.MULTIPLEX_BACKGROUND
