"""Memoryless comparator on the transformed stream.

Signals when a single ``z`` falls outside equal-tail Exp(1) probability
limits.  It is parameterised either by the per-observation false-alarm
probability ``a`` or, for calibration, by the upper limit itself
(``a = 2 exp(-h_upper)``) so that a larger threshold always means fewer
alarms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["ShewhartLimits", "shewhart_step", "first_signal"]


@dataclass(frozen=True)
class ShewhartLimits:
    h_lower: float
    h_upper: float

    def __post_init__(self):
        if not 0 <= self.h_lower < self.h_upper:
            raise ValueError("need 0 <= h_lower < h_upper")

    @classmethod
    def from_alpha(cls, a: float) -> "ShewhartLimits":
        if not 0 < a < 1:
            raise ValueError("false-alarm probability must lie in (0, 1)")
        return cls(-math.log1p(-a / 2), -math.log(a / 2))

    @classmethod
    def from_upper(cls, h_upper: float) -> "ShewhartLimits":
        return cls.from_alpha(2.0 * math.exp(-h_upper))

    @property
    def alpha(self) -> float:
        return -math.expm1(-self.h_lower) + math.exp(-self.h_upper)


def shewhart_step(limits: ShewhartLimits, z) -> bool:
    """True when the observation is outside the limits."""
    zz = getattr(z, "z", z)
    return zz < limits.h_lower or zz > limits.h_upper


def first_signal(limits: ShewhartLimits, z) -> int:
    """Index of the first out-of-limits value in ``z``, or -1."""
    z = np.asarray(z)
    hit = np.flatnonzero((z < limits.h_lower) | (z > limits.h_upper))
    return int(hit[0]) if hit.size else -1
