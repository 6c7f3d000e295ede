"""Stationary in-control tables and the aggregated charting statistic.

The eight adaptive statistics have different in-control laws, so each is
mapped through an empirical CDF of its own nonzero stationary values and
then to the Exp(1) scale; the chart statistic is the largest of the eight.
Monitoring starts from a bank state drawn from a pool of stationary
snapshots, so only stationary tables are ever needed.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acusum import (COMBO_NAMES, DIRECTIONS, BankState, PriorConfig, RESET_SCOPES,
                     _q_values, collect_kernel, scan_kernel, _EMPTY_TABLES, _EMPTY_TRACE)
from .distributions import FamilyParams, params_from_dict, params_to_dict
from .exceptions import ConfigError, DomainError
from .transform import stream_block

__all__ = [
    "EmpiricalCdf",
    "SnapshotPool",
    "CalibrationArtifact",
    "build_stationary",
    "pit",
    "q_statistic",
    "q_ceiling",
    "save_artifact",
    "load_artifact",
]

_MAGIC = b"TBEMART1"
_BLOCK_VECTORS = 1 << 15


@dataclass(frozen=True)
class EmpiricalCdf:
    """Sorted nonzero in-control values of one statistic."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.sort(np.asarray(self.values, dtype=float)))

    @property
    def m(self) -> int:
        return self.values.size

    def rank(self, c):
        """Right-continuous rank of ``c``, interpolated and clipped to [1, m]."""
        t = self.values
        m = t.size
        c = np.asarray(c, dtype=float)
        lo = np.searchsorted(t, c, side="right")
        inner = np.clip(lo, 1, m - 1)
        a, b = t[inner - 1], t[inner]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(b > a, (c - a) / (b - a), 0.0)
        r = np.where(lo == 0, 1.0, np.where(lo >= m, float(m), lo + frac))
        return r


def pit(table: EmpiricalCdf, c):
    """Plotting-position probability ``rank / (m + 1)`` of a positive value."""
    if np.any(np.asarray(c) <= 0):
        raise DomainError("pit is defined for positive statistics only")
    return table.rank(c) / (table.m + 1.0)


def q_ceiling(m: int) -> float:
    """Largest attainable aggregated statistic for tables of size ``m``."""
    return math.log(m + 1.0)


@dataclass
class SnapshotPool:
    c: np.ndarray
    n: np.ndarray
    s: np.ndarray
    spacing: int
    seed: int | None = None

    def __len__(self):
        return self.c.shape[0]

    def draw(self, rng) -> BankState:
        k = int(rng.integers(len(self)))
        return self.get(k)

    def get(self, k: int) -> BankState:
        return BankState(self.c[k].copy(), self.n[k].copy(), self.s[k].copy())


@dataclass
class CalibrationArtifact:
    ic: FamilyParams
    tables: np.ndarray  # shape (8, m), each row sorted ascending
    pool: SnapshotPool
    priors: PriorConfig = field(default_factory=PriorConfig)
    reset_scope: str = "all"
    h: float | None = None
    target: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.tables.shape[1]

    def table(self, b: int) -> EmpiricalCdf:
        return EmpiricalCdf(self.tables[b])

    @property
    def ceiling(self) -> float:
        return q_ceiling(self.m)


def q_statistic(bank: BankState, tables) -> tuple[float, np.ndarray]:
    """Aggregated statistic and the eight per-combo values.

    A zero statistic contributes ``q = 0``.
    """
    if isinstance(tables, CalibrationArtifact):
        tables = tables.tables
    q = np.empty(8)
    Q = _q_values(bank.c, np.ascontiguousarray(tables), q)
    return Q, q


def build_stationary(ic: FamilyParams, priors: PriorConfig = PriorConfig(), *,
                     burn_in: int = 100_000, m: int = 1_000_000, pool_size: int = 5000,
                     spacing: int = 100, seed: int = 0,
                     reset_scope: str = "all") -> CalibrationArtifact:
    """Run one long in-control stream and record stationary behaviour.

    After ``burn_in`` observations, the first ``m`` nonzero values of every
    statistic go into its table and a bank snapshot is taken every
    ``spacing`` observations until ``pool_size`` are stored.
    """
    if burn_in < 0 or m < 2 or pool_size < 1 or spacing < 1:
        raise ConfigError("invalid build sizes")
    if reset_scope not in RESET_SCOPES:
        raise ConfigError(f"unknown reset_scope {reset_scope!r}")
    rng = np.random.default_rng(seed)
    alpha, beta, rho = priors.arrays()
    reset_all = reset_scope == "all"
    bank = BankState()

    buf = np.zeros((8, m))
    fill = np.zeros(8, dtype=np.int64)
    nonzero = np.zeros(8, dtype=np.int64)
    excursions = np.zeros(8, dtype=np.int64)
    run_len = np.zeros(8, dtype=np.int64)
    sumsq = np.zeros(8)
    since = np.zeros(1, dtype=np.int64)
    pool_c = np.zeros((pool_size, 8))
    pool_n = np.zeros((pool_size, 8, 3), dtype=np.int64)
    pool_s = np.zeros((pool_size, 8, 3))
    pool_fill = np.zeros(1, dtype=np.int64)

    burn_left = burn_in
    collected_steps = 0
    span = 0.0
    n_obs = 0
    while True:
        x1, x2 = ic.sample(_BLOCK_VECTORS, rng)
        blk = stream_block(ic, x1, x2)
        span += blk.span
        n_obs += blk.z.size
        z = blk.z
        lab = blk.label.astype(np.int64)
        start = 0
        if burn_left > 0:
            start = min(burn_left, z.size)
            scan_kernel(z[:start], lab[:start], bank.c, bank.n, bank.s, DIRECTIONS,
                        alpha, beta, rho, reset_all, _EMPTY_TABLES, np.inf, _EMPTY_TRACE)
            burn_left -= start
            if start == z.size:
                continue
        used = collect_kernel(z[start:], lab[start:], bank.c, bank.n, bank.s, DIRECTIONS,
                              alpha, beta, rho, reset_all, buf, fill, nonzero, excursions,
                              run_len, sumsq, spacing,
                              since, pool_c, pool_n, pool_s, pool_fill)
        collected_steps += used
        if np.all(fill >= m) and pool_fill[0] >= pool_size:
            break

    tables = np.sort(buf, axis=1)
    sumsq += run_len.astype(float) ** 2
    meta = {
        "family": ic.family,
        "seed": seed,
        "m": m,
        "pool_size": pool_size,
        "burn_in": burn_in,
        "spacing": spacing,
        "collected_steps": int(collected_steps),
        "nonzero_fraction": dict(zip(COMBO_NAMES, (nonzero / collected_steps).tolist())),
        # tables are built from whole excursions away from zero, which are
        # independent; m^2 / sum(L^2) is a conservative effective sample size
        "excursions": dict(zip(COMBO_NAMES, excursions.tolist())),
        "effective_size": dict(zip(COMBO_NAMES, (float(m) ** 2 / sumsq).tolist())),
        # elapsed in-control time per observation, used for ATS <-> ANOS scaling
        "time_per_obs": span / n_obs,
    }
    pool = SnapshotPool(pool_c, pool_n, pool_s, spacing, seed)
    return CalibrationArtifact(ic, tables, pool, priors, reset_scope, meta=meta)


def _priors_to_dict(p: PriorConfig) -> dict:
    return {k: getattr(p, k) for k in ("alpha_plus", "beta_plus", "alpha_minus",
                                       "beta_minus", "rho_plus", "rho_minus")}


def _header(art: CalibrationArtifact) -> dict:
    return {
        "format": 1,
        "ic": params_to_dict(art.ic),
        "priors": _priors_to_dict(art.priors),
        "reset_scope": art.reset_scope,
        "h": art.h,
        "target": art.target,
        "meta": art.meta,
        "m": art.m,
        "combos": list(COMBO_NAMES),
        "pool": {
            "spacing": art.pool.spacing,
            "seed": art.pool.seed,
            "c": art.pool.c.tolist(),
            "n": art.pool.n.tolist(),
            "s": art.pool.s.tolist(),
        },
    }


def artifact_bytes(art: CalibrationArtifact) -> bytes:
    header = json.dumps(_header(art), sort_keys=True).encode()
    out = io.BytesIO()
    out.write(_MAGIC)
    out.write(struct.pack("<Q", len(header)))
    out.write(header)
    out.write(np.ascontiguousarray(art.tables, dtype="<f8").tobytes())
    return out.getvalue()


def save_artifact(art: CalibrationArtifact, path) -> str:
    """Write the artifact; returns its SHA-256 hex digest."""
    data = artifact_bytes(art)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_artifact(path) -> CalibrationArtifact:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ConfigError(f"{path}: not an artifact file")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen])
    m = header["m"]
    tables = np.frombuffer(data[16 + hlen:], dtype="<f8").reshape(8, m).astype(float)
    p = header["pool"]
    pool = SnapshotPool(np.array(p["c"], dtype=float).reshape(-1, 8),
                        np.array(p["n"], dtype=np.int64).reshape(-1, 8, 3),
                        np.array(p["s"], dtype=float).reshape(-1, 8, 3),
                        p["spacing"], p["seed"])
    return CalibrationArtifact(params_from_dict(header["ic"]), tables, pool,
                               PriorConfig(**header["priors"]), header["reset_scope"],
                               header["h"], header["target"], header["meta"])
