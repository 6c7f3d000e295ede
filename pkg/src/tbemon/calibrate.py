"""Monte Carlo run lengths and control-limit calibration.

A replication starts the chart from a stationary in-control state, feeds
it pairs drawn from the scenario's out-of-control law (the change is at
the start) and records the elapsed time and number of observations at
the first signal.

Clock: pairs occupy back-to-back windows; pair ``i`` lasts ``X_(2)`` and
its first observation lands ``X_(1)`` into the window.

Every replication owns a generator seeded from ``(seed, replication
index)``, so results do not depend on how replications are split across
workers.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .acusum import DIRECTIONS, _EMPTY_TRACE
from .acusum import scan_kernel
from .aggregate import CalibrationArtifact
from .baseline import ShewhartLimits, first_signal
from .exceptions import CalibrationError, ConfigError
from .scenarios import Scenario
from .transform import Z_MAX, stream_block

__all__ = [
    "AcusumChart",
    "ShewhartChart",
    "RunOutcome",
    "RunLengthResult",
    "make_chart",
    "replication_rng",
    "run_once",
    "estimate_ats",
    "find_h",
    "CHARTS",
]

log = logging.getLogger(__name__)

DEFAULT_MAX_OBS = 10_000_000
CHARTS = ("acusum", "shewhart")
_FIRST_BLOCK = 64
_MAX_BLOCK = 4096


class AcusumChart:
    """Aggregated adaptive CUSUM; the threshold applies to Q."""

    name = "acusum"

    def __init__(self, artifact: CalibrationArtifact):
        self.artifact = artifact
        self._alpha, self._beta, self._rho = artifact.priors.arrays()
        self._reset_all = artifact.reset_scope == "all"
        self._tables = np.ascontiguousarray(artifact.tables)

    @property
    def bounds(self):
        return 0.0, self.artifact.ceiling

    def initial_state(self, rng):
        return self.artifact.pool.draw(rng)

    def scan(self, z, labels, state, h):
        return int(scan_kernel(z, labels, state.c, state.n, state.s, DIRECTIONS,
                               self._alpha, self._beta, self._rho, self._reset_all,
                               self._tables, h, _EMPTY_TRACE))


class ShewhartChart:
    """Equal-tail probability limits; the threshold is the upper limit."""

    name = "shewhart"

    def __init__(self, artifact: CalibrationArtifact | None = None):
        self.artifact = artifact

    @property
    def bounds(self):
        return math.log(2.0) + 1e-9, Z_MAX

    def initial_state(self, rng):
        return None

    def scan(self, z, labels, state, h):
        return first_signal(ShewhartLimits.from_upper(h), z)


def make_chart(chart, artifact):
    if not isinstance(chart, str):
        return chart
    if chart == "acusum":
        return AcusumChart(artifact)
    if chart in ("shewhart", "shewhart_baseline"):
        return ShewhartChart(artifact)
    raise ConfigError(f"unknown chart {chart!r}")


def replication_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for replication ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


@dataclass(frozen=True)
class RunOutcome:
    time: float
    obs: int
    censored: bool = False


def run_once(scenario: Scenario, artifact: CalibrationArtifact, h: float,
             chart="acusum", rng=None, max_obs: int = DEFAULT_MAX_OBS) -> RunOutcome:
    """One replication; signals at the first observation with statistic > h."""
    chart = make_chart(chart, artifact)
    if rng is None:
        rng = np.random.default_rng()
    state = chart.initial_state(rng)
    ic, oc = scenario.ic, scenario.oc
    t_base = 0.0
    obs_base = 0
    nvec = _FIRST_BLOCK
    while True:
        x1, x2 = oc.sample(nvec, rng)
        blk = stream_block(ic, x1, x2)
        idx = chart.scan(blk.z, blk.label.astype(np.int64), state, h)
        if idx >= 0 and obs_base + idx < max_obs:
            return RunOutcome(t_base + float(blk.time[idx]), obs_base + idx + 1)
        obs_base += blk.z.size
        t_base += blk.span
        if obs_base >= max_obs:
            return RunOutcome(t_base, obs_base, True)
        nvec = min(2 * nvec, _MAX_BLOCK)


@dataclass
class RunLengthResult:
    ats_mean: float
    ats_se: float
    anos_mean: float
    anos_se: float
    replications: int
    censored: int = 0
    h: float | None = None
    warnings: list = field(default_factory=list)

    def mean(self, metric: str = "ats") -> float:
        return self.ats_mean if metric == "ats" else self.anos_mean

    def se(self, metric: str = "ats") -> float:
        return self.ats_se if metric == "ats" else self.anos_se


def _run_chunk(scenario, artifact, h, chart, seed, indices, max_obs):
    chart = make_chart(chart, artifact)
    out = np.empty((len(indices), 3))
    for k, i in enumerate(indices):
        res = run_once(scenario, artifact, h, chart, replication_rng(seed, i), max_obs)
        out[k] = res.time, res.obs, res.censored
    return out


def _summarise(runs, h) -> RunLengthResult:
    R = runs.shape[0]
    t, n = runs[:, 0], runs[:, 1]
    ddof = 1 if R > 1 else 0
    res = RunLengthResult(float(t.mean()), float(t.std(ddof=ddof) / math.sqrt(R)),
                          float(n.mean()), float(n.std(ddof=ddof) / math.sqrt(R)),
                          R, int(runs[:, 2].sum()), h)
    if res.censored > 0.01 * R:
        msg = f"{res.censored} of {R} replications censored"
        res.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return res


def simulate_runs(scenario, artifact, h, chart="acusum", R=1000, seed=0, jobs=1,
                  max_obs=DEFAULT_MAX_OBS, start=0):
    """Raw ``(time, obs, censored)`` rows for replications ``start .. start+R-1``."""
    indices = np.arange(start, start + R)
    if jobs == 1 or R < 2:
        return _run_chunk(scenario, artifact, h, chart, seed, indices, max_obs)
    from joblib import Parallel, delayed

    chunks = np.array_split(indices, min(R, 4 * jobs))
    parts = Parallel(n_jobs=jobs)(
        delayed(_run_chunk)(scenario, artifact, h, chart, seed, c, max_obs) for c in chunks)
    return np.concatenate(parts)


def estimate_ats(scenario: Scenario, artifact: CalibrationArtifact, h: float, chart="acusum",
                 R: int = 10_000, seed: int = 0, jobs: int = 1,
                 max_obs: int = DEFAULT_MAX_OBS) -> RunLengthResult:
    """Average time and number of observations to signal over R replications."""
    if R < 1:
        raise ConfigError("need at least one replication")
    runs = simulate_runs(scenario, artifact, h, chart, R, seed, jobs, max_obs)
    return _summarise(runs, h)


def find_h(scenario: Scenario, artifact: CalibrationArtifact, chart="acusum",
           target: float = 200.0, metric: str = "ats", R_coarse: int = 2000,
           R_fine: int = 10_000, tol_rel: float = 0.02, seed: int = 12345,
           jobs: int = 1, max_iter: int = 60, max_obs: int = DEFAULT_MAX_OBS) -> float:
    """Bisection for the threshold whose in-control ATS (or ANOS) hits ``target``.

    Each stage reuses one set of replication seeds, so the estimated run
    length is a nondecreasing function of ``h`` within a stage.  The coarse
    stage narrows the bracket; the fine stage finishes with ``R_fine``
    replications.  The threshold is stored on ``artifact``: as ``h`` for
    the adaptive CUSUM and under ``meta["shewhart"]`` for the comparator.
    """
    if metric not in ("ats", "anos"):
        raise ConfigError("metric must be 'ats' or 'anos'")
    if scenario.oc != scenario.ic:
        scenario = scenario.ic_scenario()
    ch = make_chart(chart, artifact)
    lo, hi = ch.bounds

    def evaluate(h, R):
        # censoring only biases the mean downward, which cannot flip the
        # bisection direction, so the warning is muted here
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = estimate_ats(scenario, artifact, h, ch, R, seed, jobs, max_obs)
        log.info("h=%.6f R=%d %s=%.3f (se %.3f)", h, R, metric, res.mean(metric), res.se(metric))
        return res

    per_obs_meta = artifact.meta.get("time_per_obs", 1.0) if artifact is not None else 1.0
    if ch.name == "shewhart":
        # in control the comparator signals after a geometric number of
        # observations with mean 1 / a = exp(h) / 2; start the bracket at a
        # limit whose mean is a hundred times the target
        obs_target = target / per_obs_meta if metric == "ats" else target
        hi = min(hi, math.log(2.0 * 100.0 * max(obs_target, 1.0)))
    if ch.name == "acusum":
        per_obs = artifact.meta.get("time_per_obs", 1.0) if metric == "ats" else 1.0
        if target / per_obs > artifact.m + 1:
            raise CalibrationError(
                f"target {target} is beyond what tables of size m={artifact.m} can resolve; "
                "rebuild the artifact with a larger m")
    base = evaluate(lo, R_coarse)
    if base.mean(metric) >= target:
        raise CalibrationError(
            f"target {target} does not exceed the run length {base.mean(metric):.3f} "
            f"at the lowest threshold {lo}")

    for R, final in ((R_coarse, False), (R_fine, True)):
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            res = evaluate(mid, R)
            value = res.mean(metric)
            if abs(value - target) <= tol_rel * target:
                if final or R_coarse >= R_fine:
                    if res.se(metric) > tol_rel * target:
                        raise CalibrationError(
                            f"standard error {res.se(metric):.3f} too large for tolerance "
                            f"{tol_rel}; increase R")
                    record = {"metric": metric, "value": target, "R": R, "seed": seed}
                    if ch.name == "acusum":
                        artifact.h = mid
                        artifact.target = record
                    elif artifact is not None:
                        artifact.meta["shewhart"] = {"h": mid, "target": record}
                    return mid
                break
            if value < target:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12:
                raise CalibrationError("bisection bracket collapsed before reaching tolerance")
        else:
            raise CalibrationError("bisection did not converge; increase max_iter or R")
    raise CalibrationError("bisection did not converge")
