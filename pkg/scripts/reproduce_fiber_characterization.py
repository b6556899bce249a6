"""Run the fiber characterization sweep and print the fitted delay and broadening slopes."""
import argparse
from pathlib import Path

from qcmux.config import default_characterization, load_config
from qcmux.scenario import run, write_outputs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("out/characterization"))
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else default_characterization()
    report = run(cfg)
    write_outputs(report, args.out)
    print(f"{'L [km]':>8} {'peak [ns]':>10} {'fwhm [ps]':>10} {'base [ps]':>10}")
    for p in report.points:
        pk = p["peak"]
        if pk is None:
            print(f"{p['length_km']:8g} {'-':>10}")
            continue
        print(f"{p['length_km']:8g} {pk['center_of_mass_ps'] / 1000:10.3f} {pk['fwhm_gaussian_ps']:10.1f} "
              f"{pk['base_width_ps']:10d}")
    d = report.fits["delay_ps_per_km"]
    print(f"delay slope      {d['slope']:.1f} +- {d['slope_error']:.1f} ps/km")
    b = report.fits.get("broadening_fwhm_ps_per_km")
    if b:
        print(f"broadening slope {b['slope']:.1f} +- {b['slope_error']:.1f} ps/km")
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()
