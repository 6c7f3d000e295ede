"""Simulation scenarios: parameter derivation and the published row layout.

Rows list the mean pairs ``(E[X1], E[X2])`` of each regime; the first row
of every scenario is the in-control one.  ``REFERENCE_ATS`` holds the
published (adaptive CUSUM, Shewhart) average times to signal for
comparison.  Independent MOBE and Gumbel rows are fully determined by
their means; dependent and MOBW rows use the documented substitutes in
:func:`scenario_params`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .distributions import FamilyParams, GumbelParams, MobeParams, MobwParams
from .exceptions import ConfigError

__all__ = [
    "Scenario",
    "scenario_params",
    "scenario_rows",
    "make_scenarios",
    "is_dependent",
    "is_decrease",
    "ROWS",
    "REFERENCE_ATS",
    "DEFAULT_DEPENDENCE",
    "DEFAULT_ETA",
]

DEFAULT_DEPENDENCE = 0.5
DEFAULT_ETA = 1.5

_S1 = [(5, 5), (7.5, 5), (10, 5), (7.5, 7.5), (10, 10), (5, 2.5), (5, 1), (2.5, 2.5), (1, 1)]
_S3 = [(5, 15), (7.5, 15), (10, 15)]
_S3_TAIL = [(5, 10.5), (5, 7.5), (3.5, 7.5), (2.5, 7.5)]

ROWS = {
    "mobe": {
        1: _S1,
        2: [(5, 5), (7.5, 5), (10, 5), (7.5, 7.5), (10.1, 10.1), (5, 2.5), (1, 5), (2.5, 2.5), (1, 1)],
        3: _S3 + [(7.5, 22.7), (10, 30.3)] + _S3_TAIL,
        4: _S3 + [(7.5, 22.7), (10, 30.3)] + _S3_TAIL,
    },
    "mobw": {
        1: _S1,
        2: [(5, 5), (7.5, 5), (10, 5), (7.5, 7.5), (10, 10), (5, 2.5), (5, 2), (2.5, 2.5), (1, 1)],
        3: _S3 + [(7.5, 22.2), (10, 29.5)] + _S3_TAIL,
        4: _S3 + [(7.5, 22.6), (10, 29.9)] + _S3_TAIL,
    },
    "gumbel": {
        1: _S1,
        2: _S1,
        3: _S3 + [(7.5, 22.5), (10, 30)] + _S3_TAIL,
        4: _S3 + [(7.5, 22.5), (10, 30)] + _S3_TAIL,
    },
}

# (adaptive CUSUM, Shewhart) ATS per row, same order as ROWS
REFERENCE_ATS = {
    "mobe": {
        1: [(199.3, 198.5), (109.5, 142.8), (72.9, 103.4), (79.2, 108.3), (53.6, 73.4),
            (60.8, 171.4), (27, 100.7), (23, 99.1), (5.4, 16)],
        2: [(196.7, 203.5), (110.9, 145.2), (72.9, 107.1), (76.3, 112), (52.9, 73.1),
            (61.8, 176.9), (26.4, 107.6), (23.6, 102.6), (5.5, 16.5)],
        3: [(193.6, 194.1), (110.2, 135.2), (72.8, 99.2), (97.7, 132.4), (73.9, 102.1),
            (107.6, 167.4), (59.5, 128.1), (41.8, 119.1), (31.1, 99.8)],
        4: [(206, 203.2), (114.8, 140.4), (78.1, 103.9), (104.6, 140.1), (79.4, 104.7),
            (109.1, 172), (61.1, 130.5), (42.1, 120.3), (31.7, 99.4)],
    },
    "mobw": {
        1: [(201.4, 203.2), (47, 68), (29.9, 36), (33, 41.4), (23.4, 22.8),
            (34.7, 133), (19.6, 37.8), (14.2, 50.2), (4.4, 3.5)],
        2: [(198.6, 199), (47.4, 66.8), (29.9, 35.6), (33.4, 41.4), (23.6, 22.9),
            (33.8, 135.9), (27.1, 107.4), (14.2, 49), (4.4, 3.4)],
        3: [(206.9, 195.5), (53, 72), (32.9, 39.1), (49.5, 63.2), (36.8, 39),
            (64.9, 150.8), (37, 88), (25.3, 69.6), (20.1, 49.8)],
        4: [(200.4, 200.9), (53, 75.7), (33.4, 39.6), (49.7, 64.3), (37.4, 39.7),
            (65.6, 160.8), (36.3, 91.9), (25.4, 72.8), (19.9, 52.3)],
    },
    "gumbel": {
        1: [(200.2, 198.8), (109.2, 141.8), (71.6, 104.8), (78.1, 109.3), (54.1, 73.1),
            (60.8, 172.3), (26.8, 101.1), (23.2, 100.1), (5.6, 16.1)],
        2: [(201.3, 198.7), (109, 149.6), (68.1, 108.3), (90.2, 126.3), (62.7, 85.8),
            (51.8, 163), (17.2, 66.6), (26.5, 117.6), (6.1, 24.8)],
        3: [(189.7, 196), (109.1, 137.8), (72.2, 100), (100.8, 134.6), (75.7, 100.4),
            (107.4, 167), (59.3, 126.4), (41.4, 118.5), (31.9, 98.9)],
        4: [(204.4, 197.6), (91.8, 124.3), (64, 86.7), (118.4, 144.2), (89.2, 111.7),
            (89.5, 147.8), (47.9, 96.4), (44.5, 111.1), (37.3, 116)],
    },
}


def is_dependent(scenario_id: int) -> bool:
    if scenario_id not in (1, 2, 3, 4):
        raise ConfigError(f"scenario id must be 1-4, got {scenario_id!r}")
    return scenario_id in (2, 4)


def _shared_rates(rates, d):
    # shared-shock rate pinned by the larger mean so both individual rates stay positive
    shared = d * min(rates)
    return rates[0] - shared, rates[1] - shared, shared


def scenario_params(family: str, scenario_id: int, means, dependence: float | None = None,
                    eta: float = DEFAULT_ETA) -> FamilyParams:
    """Parameters of ``family`` with marginal means ``means``.

    Independent scenarios (1, 3) have no shared shock / ``delta = 1``.
    Dependent scenarios (2, 4) use a shared-shock share ``dependence`` of
    the smaller marginal rate (MOBE, MOBW) or ``delta = dependence``
    (Gumbel).
    """
    m1, m2 = (float(v) for v in means)
    if m1 <= 0 or m2 <= 0:
        raise ConfigError("means must be positive")
    dep = is_dependent(scenario_id)
    d = DEFAULT_DEPENDENCE if dependence is None else float(dependence)
    if family == "gumbel":
        return GumbelParams(m1, m2, d if dep else 1.0)
    if family == "mobe":
        rates = (1.0 / m1, 1.0 / m2)
    elif family == "mobw":
        g = math.gamma(1.0 + 1.0 / eta)
        rates = ((g / m1) ** eta, (g / m2) ** eta)
    else:
        raise ConfigError(f"unknown family {family!r}")
    if dep:
        if not 0 <= d < 1:
            raise ConfigError("dependence level must lie in [0, 1)")
        l1, l2, l3 = _shared_rates(rates, d)
    else:
        l1, l2, l3 = rates[0], rates[1], 0.0
    if l1 <= 0 or l2 <= 0:
        raise ConfigError("infeasible rates for the requested means")
    if family == "mobe":
        return MobeParams(l1, l2, l3)
    return MobwParams(l1, l2, l3, eta)


@dataclass(frozen=True)
class Scenario:
    family: str
    scenario_id: int
    ic: FamilyParams
    oc: FamilyParams
    ic_means: tuple
    oc_means: tuple
    row: int = 0

    def __post_init__(self):
        if type(self.ic) is not type(self.oc):
            raise ConfigError("ic and oc must be the same family")
        for p, means in ((self.ic, self.ic_means), (self.oc, self.oc_means)):
            got = p.marginal_means()
            if any(abs(a - b) > 1e-9 * max(1.0, abs(b)) for a, b in zip(got, means)):
                raise ConfigError(f"parameters {p} do not have means {means}")

    @property
    def in_control(self) -> bool:
        return self.row == 0

    def ic_scenario(self) -> "Scenario":
        return Scenario(self.family, self.scenario_id, self.ic, self.ic,
                        self.ic_means, self.ic_means, 0)


def is_decrease(ic_means, oc_means) -> bool:
    """Every mean at or below its in-control value, at least one strictly."""
    return (all(o <= i for o, i in zip(oc_means, ic_means))
            and any(o < i for o, i in zip(oc_means, ic_means)))


def scenario_rows(family: str, scenario_id: int):
    return ROWS[family][scenario_id]


def make_scenarios(family: str, scenario_id: int, dependence: float | None = None,
                   eta: float = DEFAULT_ETA) -> list[Scenario]:
    """All rows of one scenario block, in-control row first."""
    rows = scenario_rows(family, scenario_id)
    ic_means = tuple(float(v) for v in rows[0])
    ic = scenario_params(family, scenario_id, ic_means, dependence, eta)
    out = []
    for r, means in enumerate(rows):
        means = tuple(float(v) for v in means)
        oc = scenario_params(family, scenario_id, means, dependence, eta)
        out.append(Scenario(family, scenario_id, ic, oc, ic_means, means, r))
    return out
