"""Eight adaptive CUSUM statistics over the labelled exponential stream.

Each statistic targets one direction pattern ``(d1, d2, d3)`` in
``{+, -}^3`` for the three out-of-control rates.  The rate for the current
label is estimated from the observations since the last reset with a
conjugate Gamma prior and clamped away from 1; the current observation is
never part of its own estimate.

The pure-Python :func:`update` / :func:`bank_update` pair is the readable
reference.  The numba kernels below do the same arithmetic in the same
order and are what the simulation and monitoring code actually runs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .transform import LabeledZ

__all__ = [
    "COMBOS",
    "COMBO_NAMES",
    "DIRECTIONS",
    "PriorConfig",
    "AcusumState",
    "BankState",
    "khat",
    "update",
    "bank_update",
    "RESET_SCOPES",
]

#: canonical order (+,+,+), (+,+,-), ..., (-,-,-)
COMBOS = tuple(itertools.product("+-", repeat=3))
COMBO_NAMES = tuple("".join(c) for c in COMBOS)
#: 0 for an increase-detecting estimator, 1 for a decrease-detecting one
DIRECTIONS = np.array([[0 if d == "+" else 1 for d in c] for c in COMBOS], dtype=np.int64)

RESET_SCOPES = ("all", "matching_label")
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class PriorConfig:
    """Gamma priors and clamps for the two estimator directions."""

    alpha_plus: float = 22.05
    beta_plus: float = 21.0
    alpha_minus: float = 9.5
    beta_minus: float = 10.0
    rho_plus: float = 1.05
    rho_minus: float = 0.95

    def __post_init__(self):
        if min(self.alpha_plus, self.beta_plus, self.alpha_minus, self.beta_minus) <= 0:
            raise ValueError("prior parameters must be positive")
        if not self.rho_minus < 1.0 < self.rho_plus:
            raise ValueError("need rho_minus < 1 < rho_plus")
        if not math.isclose(self.alpha_plus / self.beta_plus, self.rho_plus, rel_tol=1e-9):
            raise ValueError("alpha_plus / beta_plus must equal rho_plus")
        if not math.isclose(self.alpha_minus / self.beta_minus, self.rho_minus, rel_tol=1e-9):
            raise ValueError("alpha_minus / beta_minus must equal rho_minus")

    def arrays(self):
        return (np.array([self.alpha_plus, self.alpha_minus]),
                np.array([self.beta_plus, self.beta_minus]),
                np.array([self.rho_plus, self.rho_minus]))


@dataclass
class AcusumState:
    c: float = 0.0
    n: list = field(default_factory=lambda: [0, 0, 0])
    s: list = field(default_factory=lambda: [0.0, 0.0, 0.0])


def khat(state: AcusumState, label: int, direction: str, priors: PriorConfig) -> float:
    """Clamped Bayesian estimate of the rate for ``label``."""
    j = label - 1
    if direction == "+":
        raw = (priors.alpha_plus + state.n[j]) / (priors.beta_plus + state.s[j])
        return max(priors.rho_plus, raw)
    raw = (priors.alpha_minus + state.n[j]) / (priors.beta_minus + state.s[j])
    return min(priors.rho_minus, raw)


def update(state: AcusumState, combo, z: LabeledZ, priors: PriorConfig,
           reset_scope: str = "all") -> AcusumState:
    """One recursion step; returns a new state."""
    if reset_scope not in RESET_SCOPES:
        raise ValueError(f"unknown reset_scope {reset_scope!r}")
    j = z.label - 1
    k = khat(state, z.label, combo[j], priors)
    c = max(0.0, state.c + math.log(k) + (1.0 - k) * z.z)
    n = list(state.n)
    s = list(state.s)
    if c == 0.0:
        if reset_scope == "all":
            n, s = [0, 0, 0], [0.0, 0.0, 0.0]
        else:
            n[j], s[j] = 0, 0.0
    else:
        n[j] += 1
        s[j] += z.z
    return AcusumState(c, n, s)


@dataclass
class BankState:
    """All eight statistics with their counters, as arrays.

    ``c`` has shape (8,), ``n`` and ``s`` have shape (8, 3); rows follow
    :data:`COMBOS`.
    """

    c: np.ndarray = field(default_factory=lambda: np.zeros(8))
    n: np.ndarray = field(default_factory=lambda: np.zeros((8, 3), dtype=np.int64))
    s: np.ndarray = field(default_factory=lambda: np.zeros((8, 3)))

    def copy(self) -> "BankState":
        return BankState(self.c.copy(), self.n.copy(), self.s.copy())

    def combo(self, b: int) -> AcusumState:
        return AcusumState(float(self.c[b]), [int(v) for v in self.n[b]],
                           [float(v) for v in self.s[b]])

    def to_dict(self) -> dict:
        return {"version": SNAPSHOT_VERSION, "c": self.c.tolist(),
                "n": self.n.tolist(), "s": self.s.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "BankState":
        if obj.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {obj.get('version')!r}")
        return cls(np.array(obj["c"], dtype=float),
                   np.array(obj["n"], dtype=np.int64),
                   np.array(obj["s"], dtype=float))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def bank_update(bank: BankState, z: LabeledZ, priors: PriorConfig,
                reset_scope: str = "all") -> BankState:
    out = bank.copy()
    for b, combo in enumerate(COMBOS):
        st = update(bank.combo(b), combo, z, priors, reset_scope)
        out.c[b] = st.c
        out.n[b] = st.n
        out.s[b] = st.s
    return out


# --------------------------------------------------------------------------
# compiled kernels

@numba.njit(cache=True)
def _step(zt, j, c, n, s, dirs, alpha, beta, rho, reset_all):
    for b in range(8):
        d = dirs[b, j]
        k = (alpha[d] + n[b, j]) / (beta[d] + s[b, j])
        if d == 0:
            if k < rho[0]:
                k = rho[0]
        elif k > rho[1]:
            k = rho[1]
        cn = c[b] + math.log(k) + (1.0 - k) * zt
        if cn > 0.0:
            c[b] = cn
            n[b, j] += 1
            s[b, j] += zt
        else:
            c[b] = 0.0
            if reset_all:
                for i in range(3):
                    n[b, i] = 0
                    s[b, i] = 0.0
            else:
                n[b, j] = 0
                s[b, j] = 0.0


@numba.njit(cache=True)
def _pit_rank(table, m, x):
    # right-continuous rank with linear interpolation, clipped to [1, m]
    lo = np.searchsorted(table, x, side="right")
    if lo == 0:
        return 1.0
    if lo >= m:
        return float(m)
    a = table[lo - 1]
    b = table[lo]
    if b > a:
        return lo + (x - a) / (b - a)
    return float(lo)


@numba.njit(cache=True)
def _q_values(c, tables, out):
    m = tables.shape[1]
    logm1 = math.log(m + 1.0)
    qmax = 0.0
    for b in range(8):
        if c[b] > 0.0:
            r = _pit_rank(tables[b], m, c[b])
            q = logm1 - math.log(m + 1.0 - r)
        else:
            q = 0.0
        out[b] = q
        if q > qmax:
            qmax = q
    return qmax


@numba.njit(cache=True)
def _gate(tables, h):
    # per-combo value below which q cannot exceed h; exact Q is only
    # computed once some statistic reaches its gate
    m = tables.shape[1]
    gate = np.empty(8)
    if not h < math.log(m + 1.0):
        gate[:] = np.inf
        return gate
    r_star = (m + 1.0) * -math.expm1(-h)
    j = int(math.floor(r_star)) - 1
    for b in range(8):
        if j < 1:
            gate[b] = 0.0
        else:
            gate[b] = tables[b, min(j, m) - 1]
    return gate


@numba.njit(cache=True)
def scan_kernel(z, lab, c, n, s, dirs, alpha, beta, rho, reset_all, tables, h, trace):
    """Run the bank over ``z``; return the first index with Q > h, else -1.

    State arrays are updated in place.  With an empty ``tables`` no Q is
    computed and the whole block is consumed.  When ``trace`` has a row per
    observation it receives the eight q values.
    """
    m = tables.shape[1]
    record = trace.shape[0] > 0
    q = np.empty(8)
    if m > 0:
        gate = _gate(tables, h)
    for t in range(z.shape[0]):
        _step(z[t], lab[t] - 1, c, n, s, dirs, alpha, beta, rho, reset_all)
        if m == 0:
            continue
        if record:
            Q = _q_values(c, tables, q)
            for b in range(8):
                trace[t, b] = q[b]
            if Q > h:
                return t
            continue
        for b in range(8):
            if c[b] > 0.0 and c[b] >= gate[b]:
                if _q_values(c, tables, q) > h:
                    return t
                break
    return -1


@numba.njit(cache=True)
def collect_kernel(z, lab, c, n, s, dirs, alpha, beta, rho, reset_all,
                   buf, fill, nonzero, excursions, run_len, sumsq, G, since_snap,
                   pool_c, pool_n, pool_s, pool_fill):
    """Stationary collection: store nonzero statistics and spaced snapshots.

    ``excursions`` counts, per combo, the departures from zero whose values
    enter the table; ``run_len`` is the table contribution of the current
    excursion and ``sumsq`` accumulates the squares of finished ones.  Returns the number of observations consumed; stops
    early once every table buffer and the snapshot pool are full.
    """
    m = buf.shape[1]
    M = pool_c.shape[0]
    was_zero = np.empty(8, dtype=np.bool_)
    for t in range(z.shape[0]):
        for b in range(8):
            was_zero[b] = c[b] == 0.0
        _step(z[t], lab[t] - 1, c, n, s, dirs, alpha, beta, rho, reset_all)
        full = True
        for b in range(8):
            if c[b] > 0.0:
                nonzero[b] += 1
                if fill[b] < m:
                    if was_zero[b] or fill[b] == 0:
                        excursions[b] += 1
                        sumsq[b] += run_len[b] * run_len[b]
                        run_len[b] = 0
                    run_len[b] += 1
                    buf[b, fill[b]] = c[b]
                    fill[b] += 1
            if fill[b] < m:
                full = False
        since_snap[0] += 1
        if pool_fill[0] < M and since_snap[0] >= G:
            k = pool_fill[0]
            for b in range(8):
                pool_c[k, b] = c[b]
                for i in range(3):
                    pool_n[k, b, i] = n[b, i]
                    pool_s[k, b, i] = s[b, i]
            pool_fill[0] += 1
            since_snap[0] = 0
        if full and pool_fill[0] >= M:
            return t + 1
    return z.shape[0]


_EMPTY_TABLES = np.zeros((8, 0))
_EMPTY_TRACE = np.zeros((0, 8))


def run_bank(bank: BankState, z, labels, priors: PriorConfig = PriorConfig(),
             reset_scope: str = "all"):
    """Advance ``bank`` in place over a whole array of observations."""
    if reset_scope not in RESET_SCOPES:
        raise ValueError(f"unknown reset_scope {reset_scope!r}")
    alpha, beta, rho = priors.arrays()
    scan_kernel(np.ascontiguousarray(z, dtype=float),
                np.ascontiguousarray(labels, dtype=np.int64),
                bank.c, bank.n, bank.s, DIRECTIONS, alpha, beta, rho,
                reset_scope == "all", _EMPTY_TABLES, np.inf, _EMPTY_TRACE)
    return bank
