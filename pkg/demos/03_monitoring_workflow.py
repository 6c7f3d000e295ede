"""Phase II monitoring with the fitted bivariate Weibull model.

Phase I gives the in-control parameters below.  We calibrate the adaptive
CUSUM to an in-control ARL of 50 observations, then monitor a simulated
Phase II stream in which both components start failing more often after
the 20th vector.  The equivalent shell session is::

    tbemon build --ic ic.json --m 200000 --seed 1 --out field.art
    tbemon calibrate --artifact field.art --metric arl --target 50 --seed 2
    tbemon monitor --artifact field.art --input phase2.csv --seed 3

``monitor`` exits with status 2 when it raises an alarm.
"""
import numpy as np

from tbemon.aggregate import build_stationary, q_statistic
from tbemon.calibrate import find_h
from tbemon.distributions import MobwParams
from tbemon.monitor import Monitor
from tbemon.scenarios import Scenario
from tbemon.transform import events_from_pairs

ic = MobwParams(lambda1=0.0435, lambda2=0.0105, lambda3=5.78e-8, eta=1.1677)
means = ic.marginal_means()
print("in-control means:", tuple(round(m, 2) for m in means))

art = build_stationary(ic, m=200_000, pool_size=2000, seed=1)
h = find_h(Scenario("mobw", 0, ic, ic, means, means), art, "acusum", target=50,
           metric="anos", R_coarse=2000, R_fine=10_000, tol_rel=0.02, seed=2)
print(f"h for ARL0 = 50: {h:.4f}")

# Phase II: 20 in-control vectors, then the failure rates triple
rng = np.random.default_rng(3)
oc = MobwParams(3 * ic.lambda1, 3 * ic.lambda2, ic.lambda3, ic.eta)
x1a, x2a = ic.sample(20, rng)
x1b, x2b = oc.sample(80, rng)
events = events_from_pairs(np.r_[x1a, x1b], np.r_[x2a, x2b])

# Pool snapshots are unconditioned stationary states, and at this h about a
# third of them already sit above the limit.  A chart that has been running
# quietly is better represented by a snapshot below h.
pick = np.random.default_rng(4)
start = art.pool.draw(pick)
while q_statistic(start, art)[0] > h:
    start = art.pool.draw(pick)
mon = Monitor(art, h, "acusum", start)
alarms = []
for ev in events:
    # keep going past alarms, as in continue mode
    alarms += [rec for rec in mon.push(ev) if rec.get("alarm")]

change = 2 * 20  # two observations per vector
before = [a["t"] for a in alarms if a["t"] <= change]
after = [a["t"] for a in alarms if a["t"] > change]
print(f"alarms before the change (obs 1-{change}): {before}")
print(f"alarms after the change  (obs {change + 1}-{mon.t}): {len(after)} of {mon.t - change}")
if after:
    first = next(a for a in alarms if a["t"] > change)
    top = sorted(first["q"].items(), key=lambda kv: -kv[1])[:3]
    print(f"first alarm after the change: observation {first['t']}, "
          f"elapsed {first['elapsed']:.1f}, Q={first['Q']:.3f}, combo {first['combo']}")
    print("  largest per-combo q:", ", ".join(f"{k}={v:.3f}" for k, v in top))
