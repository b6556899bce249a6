"""Print the direct vs converted loss table over a range of fiber lengths."""
import argparse

from qcmux.linkbudget import LinkBudgetInput, break_even_length, table

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--efficiency", type=float, default=0.08)
ap.add_argument("--max-km", type=float, default=30.0)
ap.add_argument("--step", type=float, default=2.5)
args = ap.parse_args()

inp = LinkBudgetInput(qfc_efficiency=args.efficiency)
n = int(round(args.max_km / args.step))
print(f"{'L [km]':>7} {'direct':>8} {'converted':>10} {'advantage':>10}  [dB]")
for row in table(inp, [k * args.step for k in range(n + 1)]):
    print(f"{row['length_km']:7.1f} {row['direct_loss_db']:8.2f} {row['converted_loss_db']:10.2f} "
          f"{row['advantage_db']:10.2f}")
print(f"break-even at {break_even_length(inp):.3f} km")
