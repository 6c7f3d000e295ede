"""Bivariate time-between-events families.

Three families are supported, each with exponential-type conditional laws
for the order statistics of a pair:

* ``MobeParams`` -- Marshall-Olkin bivariate exponential, shock rates
  ``lambda1, lambda2, lambda3``.
* ``MobwParams`` -- Marshall-Olkin bivariate Weibull, the same rates plus a
  common shape ``eta``.
* ``GumbelParams`` -- Gumbel bivariate exponential with marginal means
  ``theta1, theta2`` and dependence ``delta`` in (0, 1].

Every family exposes the cumulative hazards of the first order statistic
and of the second order statistic given the first.  The conditional CDFs
are ``1 - exp(-H)``; keeping ``H`` around avoids the cancellation in
``-log(1 - F)`` when ``F`` is close to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .exceptions import ConfigError, DomainError

__all__ = [
    "MobeParams",
    "MobwParams",
    "GumbelParams",
    "FamilyParams",
    "BivariateSample",
    "sample_mobe",
    "sample_mobw",
    "sample_gumbel",
    "sample_pairs",
    "ic_cdf_first",
    "ic_cdf_second",
    "oc_law_u1",
    "oc_law_u2",
    "params_from_dict",
    "params_to_dict",
    "positive_stable",
]

# delta at or above this is treated as exact independence when sampling
_INDEPENDENCE_CUTOFF = 1.0 - 1e-9


@dataclass(frozen=True)
class BivariateSample:
    x1: float
    x2: float
    tied: bool


class _MarshallOlkin:
    """Shared machinery for the shock-model families (MOBE and MOBW)."""

    lambda1: float
    lambda2: float
    lambda3: float

    def _check_rates(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ConfigError("lambda1 and lambda2 must be positive")
        if self.lambda3 < 0:
            raise ConfigError("lambda3 must be nonnegative")

    @property
    def shape(self) -> float:
        return 1.0

    @property
    def total_rate(self) -> float:
        """Lambda = lambda1 + lambda2 + lambda3."""
        return self.lambda1 + self.lambda2 + self.lambda3

    def tie_probability(self) -> float:
        return self.lambda3 / self.total_rate

    def _sample_shocks(self, size, rng):
        e1 = rng.exponential(1.0 / self.lambda1, size)
        e2 = rng.exponential(1.0 / self.lambda2, size)
        if self.lambda3 > 0:
            e3 = rng.exponential(1.0 / self.lambda3, size)
        else:
            e3 = np.full(size, np.inf)
        # a shared shock assigns the same float to both coordinates
        return np.minimum(e1, e3), np.minimum(e2, e3)

    def cumhaz_first(self, x):
        x = np.asarray(x, dtype=float)
        return self.total_rate * x ** self.shape

    def cumhaz_second(self, y, x, v):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        eta = self.shape
        rate = np.where(np.asarray(v) == 0,
                        self.lambda2 + self.lambda3,
                        self.lambda1 + self.lambda3)
        return rate * (y ** eta - x ** eta)

    def marginal_means(self) -> tuple[float, float]:
        g = math.gamma(1.0 + 1.0 / self.shape)
        return (g * (self.lambda1 + self.lambda3) ** (-1.0 / self.shape),
                g * (self.lambda2 + self.lambda3) ** (-1.0 / self.shape))


@dataclass(frozen=True)
class MobeParams(_MarshallOlkin):
    """Marshall-Olkin bivariate exponential.

    ``S(x1, x2) = exp(-lambda1 x1 - lambda2 x2 - lambda3 max(x1, x2))``.
    """

    lambda1: float
    lambda2: float
    lambda3: float = 0.0
    family: str = field(default="mobe", init=False, repr=False)

    def __post_init__(self):
        self._check_rates()

    def sample(self, size, rng):
        """Draw ``size`` pairs; returns arrays ``(x1, x2)``."""
        return self._sample_shocks(size, rng)


@dataclass(frozen=True)
class MobwParams(_MarshallOlkin):
    """Marshall-Olkin bivariate Weibull.

    ``S(x1, x2) = exp(-lambda1 x1^eta - lambda2 x2^eta
    - lambda3 max(x1, x2)^eta)``.  A MOBE draw raised to the power ``1/eta``
    has exactly this law, ties included.
    """

    lambda1: float
    lambda2: float
    lambda3: float
    eta: float
    family: str = field(default="mobw", init=False, repr=False)

    def __post_init__(self):
        self._check_rates()
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ConfigError("eta must be positive")

    @property
    def shape(self) -> float:
        return self.eta

    def sample(self, size, rng):
        e1, e2 = self._sample_shocks(size, rng)
        inv = 1.0 / self.eta
        return e1 ** inv, e2 ** inv


@dataclass(frozen=True)
class GumbelParams:
    """Gumbel bivariate exponential, ``S = exp(-C(x1, x2)^delta)``.

    ``C(x1, x2) = (x1/theta1)^(1/delta) + (x2/theta2)^(1/delta)``; the
    marginals are exponential with means ``theta1`` and ``theta2`` and
    ``delta = 1`` gives independence.
    """

    theta1: float
    theta2: float
    delta: float = 1.0
    family: str = field(default="gumbel", init=False, repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.theta1) and self.theta1 > 0
                and math.isfinite(self.theta2) and self.theta2 > 0):
            raise ConfigError("theta1 and theta2 must be positive")
        if not (0 < self.delta <= 1):
            raise ConfigError("delta must lie in (0, 1]")

    @property
    def independent(self) -> bool:
        return self.delta == 1.0

    def c_function(self, x1, x2):
        """``C(x1, x2)`` evaluated elementwise."""
        p = 1.0 / self.delta
        return ((np.asarray(x1, dtype=float) / self.theta1) ** p
                + (np.asarray(x2, dtype=float) / self.theta2) ** p)

    @property
    def first_rate(self) -> float:
        """``C(1, 1)^delta``, the exponential rate of the minimum."""
        return float(self.c_function(1.0, 1.0)) ** self.delta

    def tie_probability(self) -> float:
        return 0.0

    def marginal_means(self) -> tuple[float, float]:
        return self.theta1, self.theta2

    def sample(self, size, rng):
        e1 = rng.standard_exponential(size)
        e2 = rng.standard_exponential(size)
        if self.delta >= _INDEPENDENCE_CUTOFF:
            return self.theta1 * e1, self.theta2 * e2
        w = positive_stable(self.delta, size, rng)
        return (self.theta1 * (e1 / w) ** self.delta,
                self.theta2 * (e2 / w) ** self.delta)

    def cumhaz_first(self, x):
        return self.first_rate * np.asarray(x, dtype=float)

    def cumhaz_second(self, y, x, v):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        v = np.asarray(v)
        # first-arriving coordinate scale, second-arriving coordinate scale
        a_first = np.where(v == 0, self.theta1, self.theta2)
        a_second = np.where(v == 0, self.theta2, self.theta1)
        d = self.delta
        p = 1.0 / d
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            cxy = (x / a_first) ** p + (y / a_second) ** p
            h = cxy ** d - self.first_rate * x
            if d != 1.0:
                # log C(x, y) - log C(x, x) written through r = y / x
                r = y / x
                c11 = float(self.c_function(1.0, 1.0))
                log_ratio = np.log((a_first ** -p + r ** p * a_second ** -p) / c11)
                h = h - (d - 1.0) * log_ratio
        # y == x must give exactly zero hazard; roundoff just above x can
        # leave a tiny negative value under strong dependence
        return np.where(y == x, 0.0, np.maximum(h, 0.0))


FamilyParams = Union[MobeParams, MobwParams, GumbelParams]


def positive_stable(alpha, size, rng):
    """Positive stable variates with Laplace transform ``exp(-s^alpha)``.

    Kanter's representation of the Chambers-Mallows-Stuck method; valid for
    ``0 < alpha < 1``.
    """
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    a = alpha
    return (np.sin(a * u) / np.sin(u) ** (1.0 / a)
            * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a))


def sample_pairs(p: FamilyParams, size: int, rng):
    """Vectorised draw of ``size`` pairs from any family."""
    return p.sample(size, rng)


def _single(p, rng) -> BivariateSample:
    x1, x2 = p.sample(1, rng)
    a, b = float(x1[0]), float(x2[0])
    return BivariateSample(a, b, a == b)


def sample_mobe(p: MobeParams, rng) -> BivariateSample:
    return _single(p, rng)


def sample_mobw(p: MobwParams, rng) -> BivariateSample:
    return _single(p, rng)


def sample_gumbel(p: GumbelParams, rng) -> BivariateSample:
    return _single(p, rng)


def _check_nonneg(x, name="x"):
    if np.any(np.asarray(x) < 0) or np.any(np.isnan(x)):
        raise DomainError(f"{name} must be nonnegative")


def ic_cdf_first(p: FamilyParams, x, v=0):
    """Conditional CDF of the first order statistic given ``V = v``.

    The law does not depend on ``v`` for any of the three families.
    """
    if np.any(~np.isin(v, (0, 1, 2))):
        raise DomainError("v must be 0, 1 or 2")
    _check_nonneg(x)
    return -np.expm1(-p.cumhaz_first(x))


def ic_cdf_second(p: FamilyParams, y, x, v):
    """Conditional CDF of the second order statistic at ``y`` given the
    first equals ``x`` and ``V = v`` (``v`` in {0, 1})."""
    if np.any(~np.isin(v, (0, 1))):
        raise DomainError("the second observation requires v in {0, 1}")
    _check_nonneg(x)
    if np.any(np.asarray(y) < np.asarray(x)):
        raise DomainError("y must not be smaller than x")
    return -np.expm1(-p.cumhaz_second(y, x, v))


def _same_family(ic, oc):
    if type(ic) is not type(oc):
        raise ConfigError(f"family mismatch: {ic.family} vs {oc.family}")
    if isinstance(ic, MobwParams) and ic.eta != oc.eta:
        raise ConfigError("MOBW shape eta must not change between regimes")


def oc_law_u1(ic: FamilyParams, oc: FamilyParams) -> float:
    """Exponent ``k1`` with ``P(U1 <= u) = 1 - (1 - u)^k1`` under ``oc``."""
    _same_family(ic, oc)
    if isinstance(ic, GumbelParams):
        return oc.first_rate / ic.first_rate
    return oc.total_rate / ic.total_rate


def oc_law_u2(ic: FamilyParams, oc: FamilyParams, v: int) -> float:
    """Exponent of the OC law of the second uniform given ``V = v``.

    Only available where the law is closed form: MOBE, MOBW and the
    independent Gumbel case.
    """
    _same_family(ic, oc)
    if v not in (0, 1):
        raise DomainError("v must be 0 or 1")
    if isinstance(ic, GumbelParams):
        if not (ic.independent and oc.independent):
            raise NotImplementedError(
                "no closed-form law for the second uniform under dependent Gumbel")
        return ic.theta2 / oc.theta2 if v == 0 else ic.theta1 / oc.theta1
    if v == 0:
        return (oc.lambda2 + oc.lambda3) / (ic.lambda2 + ic.lambda3)
    return (oc.lambda1 + oc.lambda3) / (ic.lambda1 + ic.lambda3)


_FIELDS = {
    "mobe": (MobeParams, ("lambda1", "lambda2", "lambda3")),
    "mobw": (MobwParams, ("lambda1", "lambda2", "lambda3", "eta")),
    "gumbel": (GumbelParams, ("theta1", "theta2", "delta")),
}


def params_from_dict(obj: dict) -> FamilyParams:
    """Parse ``{"family": ..., "params": {...}}``."""
    if not isinstance(obj, dict):
        raise ConfigError("parameter set must be a JSON object")
    if "family" not in obj:
        raise ConfigError("missing field: family")
    family = obj["family"]
    if family not in _FIELDS:
        raise ConfigError(f"family: unknown value {family!r}")
    if "params" not in obj or not isinstance(obj["params"], dict):
        raise ConfigError("missing field: params")
    cls, names = _FIELDS[family]
    raw = obj["params"]
    extra = set(raw) - set(names)
    if extra:
        raise ConfigError(f"params: unexpected field(s) {sorted(extra)}")
    kwargs = {}
    for name in names:
        if name not in raw:
            if family == "mobe" and name == "lambda3":
                continue
            if family == "gumbel" and name == "delta":
                continue
            raise ConfigError(f"missing field: params.{name}")
        try:
            kwargs[name] = float(raw[name])
        except (TypeError, ValueError):
            raise ConfigError(f"params.{name}: not a number") from None
    return cls(**kwargs)


def params_to_dict(p: FamilyParams) -> dict:
    _, names = _FIELDS[p.family]
    return {"family": p.family, "params": {n: getattr(p, n) for n in names}}
