"""Quickstart: build, calibrate and compare the two charts on one block.

Builds the stationary in-control tables for the independent exponential
pair with means (5, 5), calibrates both charts to an in-control ATS of
200 and then estimates the ATS after a few shifts in the means.

Run with ``python demos/01_quickstart.py``; it takes a few seconds.
"""
from tbemon.aggregate import build_stationary
from tbemon.calibrate import estimate_ats, find_h
from tbemon.scenarios import make_scenarios

rows = make_scenarios("mobe", 1)
ic_row = rows[0]
print("in-control parameters:", ic_row.ic)

# The artifact holds the sorted nonzero values of each of the eight CUSUM
# statistics under the in-control law, plus a pool of stationary bank states.
art = build_stationary(ic_row.ic, m=100_000, pool_size=2000, seed=1)
print(f"tables: m={art.m}, ceiling log(m+1)={art.ceiling:.3f}")
print("effective size per combo:",
      {k: round(v) for k, v in art.meta["effective_size"].items()})

h_acusum = find_h(ic_row, art, "acusum", target=200, R_coarse=1000, R_fine=4000,
                  tol_rel=0.03, seed=2)
h_shewhart = find_h(ic_row, art, "shewhart", target=200, R_coarse=1000, R_fine=4000,
                    tol_rel=0.03, seed=2)
print(f"h (adaptive CUSUM) = {h_acusum:.4f}, h (Shewhart) = {h_shewhart:.4f}")

print(f"{'means':>14} {'ACUSUM ATS':>16} {'Shewhart ATS':>16}")
for sc in (rows[0], rows[2], rows[5], rows[8]):
    a = estimate_ats(sc, art, h_acusum, "acusum", R=2000, seed=3)
    s = estimate_ats(sc, art, h_shewhart, "shewhart", R=2000, seed=3)
    print(f"{str(sc.oc_means):>14} {a.ats_mean:9.1f} ({a.ats_se:4.1f}) "
          f"{s.ats_mean:9.1f} ({s.ats_se:4.1f})")
