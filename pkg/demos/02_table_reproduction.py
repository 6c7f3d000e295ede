"""Reproduce one block of the published ATS comparison.

    python demos/02_table_reproduction.py mobe 1 --R 2000

Prints the simulated ATS (and SE) of both charts next to the published
values.  Only the independent exponential blocks (mobe 1 and 3) are fully
determined by their means; the other blocks use substitute dependence
and shape parameters, so their published values are a rough guide only.
"""
import argparse

from tbemon.aggregate import build_stationary
from tbemon.calibrate import estimate_ats, find_h
from tbemon.scenarios import REFERENCE_ATS, make_scenarios

ap = argparse.ArgumentParser()
ap.add_argument("family", choices=sorted(REFERENCE_ATS))
ap.add_argument("scenario", type=int, choices=(1, 2, 3, 4))
ap.add_argument("--R", type=int, default=2000)
ap.add_argument("--m", type=int, default=200_000)
ap.add_argument("--seed", type=int, default=1)
args = ap.parse_args()

rows = make_scenarios(args.family, args.scenario)
art = build_stationary(rows[0].ic, m=args.m, pool_size=5000, seed=args.seed)
h_a = find_h(rows[0], art, "acusum", 200, seed=args.seed + 1)
h_s = find_h(rows[0], art, "shewhart", 200, seed=args.seed + 1)
print(f"{args.family} scenario {args.scenario}: {rows[0].ic}")
print(f"h_acusum={h_a:.4f} h_shewhart={h_s:.4f} R={args.R}\n")

print(f"{'means':>14} | {'ACUSUM':>14} {'pub':>6} | {'Shewhart':>14} {'pub':>6}")
for sc, (ref_a, ref_s) in zip(rows, REFERENCE_ATS[args.family][args.scenario]):
    a = estimate_ats(sc, art, h_a, "acusum", R=args.R, seed=args.seed + 2)
    s = estimate_ats(sc, art, h_s, "shewhart", R=args.R, seed=args.seed + 2)
    print(f"{str(sc.oc_means):>14} | {a.ats_mean:7.1f} ({a.ats_se:4.1f}) {ref_a:6.1f} | "
          f"{s.ats_mean:7.1f} ({s.ats_se:4.1f}) {ref_s:6.1f}")
