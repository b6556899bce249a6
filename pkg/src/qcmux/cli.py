"""Command line entry point: ``qcmux <subcommand> [options]``.

Exit codes: 0 success, 1 configuration error, 2 runtime or statistics error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .config import ConfigError, Experiment, default_config, dump_config, load_config
from .correlator import cross_correlate, find_peaks
from .linkbudget import LinkBudgetInput, summary, table
from .scenario import StatisticsError, run, write_outputs
from .timetags import read_tags

log = logging.getLogger("qcmux")

SIMULATIONS = {
    "characterize": Experiment.FIBER_CHARACTERIZATION,
    "multiplex": Experiment.MULTIPLEX,
    "background": Experiment.MULTIPLEX_BACKGROUND,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="scenario JSON (defaults to the built-in scenario)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcmux", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, exp in SIMULATIONS.items():
        p = sub.add_parser(name, help=f"run the {exp.value} experiment")
        _add_common(p)
        p.add_argument("--emit-tags", action="store_true", help="also write raw time-tag CSVs per channel")
        p.add_argument("--dump-config", action="store_true", help="write the effective config and exit")

    p = sub.add_parser("linkbudget", help="closed-form direct vs converted transmission budget")
    _add_common(p)
    p.add_argument("--efficiency", type=float, help="conversion efficiency")
    p.add_argument("--alpha-direct", type=float, help="dB/km at 854 nm")
    p.add_argument("--alpha-converted", type=float, help="dB/km at 1310 nm")
    p.add_argument("--length", type=float, help="fiber length in km")
    p.add_argument("--include-detectors", action="store_true")

    p = sub.add_parser("correlate", help="cross-correlate two time-tag CSV files")
    _add_common(p)
    p.add_argument("a", type=Path, help="start channel tags (delay = t_b - t_a)")
    p.add_argument("b", type=Path, help="stop channel tags")
    p.add_argument("--bin-width", type=int, default=1000, help="ps")
    p.add_argument("--window", type=int, nargs=2, default=(-1_000_000, 1_000_000), metavar=("LO", "HI"))
    p.add_argument("--min-counts", type=int, default=0, help="drop peaks with fewer integrated counts")
    return parser


def _simulate(args, experiment: Experiment) -> int:
    cfg = load_config(args.config) if args.config else default_config(experiment)
    cfg = cfg.replace(experiment=experiment)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.dump_config:
        dump_config(cfg, args.out / "config.json")
        return 0
    report = run(cfg)
    out = write_outputs(report, args.out, emit_tags=args.emit_tags)
    sys.stdout.write(report.to_text())
    log.info("wrote %s", out / "report.json")
    return 0


def _linkbudget(args) -> int:
    params = {}
    if args.config:
        try:
            params = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read {args.config}: {e}") from None
        allowed = {f.name for f in fields(LinkBudgetInput)}
        if set(params) - allowed:
            raise ConfigError(f"unknown keys {sorted(set(params) - allowed)}")
    for key, attr in (("qfc_efficiency", "efficiency"), ("alpha_direct", "alpha_direct"),
                      ("alpha_converted", "alpha_converted"), ("length", "length")):
        if getattr(args, attr) is not None:
            params[key] = getattr(args, attr)
    if args.include_detectors:
        params["include_detectors"] = True
    try:
        inp = LinkBudgetInput(**params)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    s = summary(inp)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "linkbudget.json").write_text(json.dumps(s, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["length_km", "direct_loss_db", "converted_loss_db", "advantage_db"])
    step = max(inp.length, 1.0) / 20.0
    for row in table(inp, [k * step for k in range(21)]):
        w.writerow([f"{row['length_km']:.4f}", f"{row['direct_loss_db']:.4f}",
                    f"{row['converted_loss_db']:.4f}", f"{row['advantage_db']:.4f}"])
    (args.out / "linkbudget.csv").write_text(buf.getvalue())
    be = s["break_even_km"]
    print(f"direct loss     {s['direct_loss_db']:.2f} dB")
    print(f"converted loss  {s['converted_loss_db']:.2f} dB")
    print(f"advantage       {s['advantage_db']:.2f} dB at {inp.length:g} km")
    print(f"break-even      {'never' if be is None else f'{be:.3f} km'}")
    return 0


def _correlate(args) -> int:
    try:
        a = read_tags(args.a)
        b = read_tags(args.b)
        hist = cross_correlate(a, b, args.bin_width, tuple(args.window))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    peaks = find_peaks(hist, min_integrated=args.min_counts)
    args.out.mkdir(parents=True, exist_ok=True)
    hist.to_csv(args.out / "histogram.csv")
    doc = {"n_a": len(a), "n_b": len(b), "bin_width_ps": args.bin_width, "window_ps": list(args.window),
           "delay_convention": "t_b - t_a", "peaks": [p.to_dict() for p in peaks]}
    (args.out / "peaks.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for p in peaks:
        print(f"peak at {p.center_of_mass / 1000:.3f} ns  base {p.base_width / 1000:.1f} ns  "
              f"counts {p.integrated_counts}")
    if not peaks:
        print("no peaks above threshold")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command in SIMULATIONS:
            return _simulate(args, SIMULATIONS[args.command])
        if args.command == "linkbudget":
            return _linkbudget(args)
        return _correlate(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (StatisticsError, RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
