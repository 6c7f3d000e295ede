"""Turning asynchronous pairs into the labelled exponential stream.

Each pair ``(x1, x2)`` is observed through its order statistics.  The
first arrival is mapped through the in-control conditional CDF of the
minimum and the second through the conditional CDF of the maximum given
the minimum; ``z = -log(1 - u)`` then makes both Exp(1) in control.  Labels
record which of the three out-of-control rates governs each ``z``:

===== =========================================
label observation
===== =========================================
1     first arrival (also a tied pair)
2     second arrival, component 1 came first
3     second arrival, component 2 came first
===== =========================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .distributions import FamilyParams
from .exceptions import DomainError, ProtocolError

__all__ = [
    "U_EPS",
    "Z_MAX",
    "EventRecord",
    "LabeledZ",
    "PendingVector",
    "StreamTransformer",
    "ZBlock",
    "classify",
    "transform_first",
    "transform_second",
    "transform_vectors",
    "stream_step",
    "stream_block",
    "events_from_pairs",
]

U_EPS = 1e-15
# largest emitted z: u is clamped to 1 - U_EPS
Z_MAX = -math.log(U_EPS)

FIRST, SECOND, TIED = "first", "second", "tied"


@dataclass(frozen=True)
class EventRecord:
    """One arrival.  ``v`` is required when ``rank`` is ``"first"``."""

    i: int
    rank: str
    x: float
    v: int | None = None


@dataclass(frozen=True)
class LabeledZ:
    z: float
    label: int
    vector_index: int
    rank: str
    clamped: bool = False


@dataclass(frozen=True)
class PendingVector:
    vector_index: int
    first_value: float
    v: int


def classify(x1: float, x2: float) -> int:
    """0 if component 1 arrives first, 1 if component 2 does, 2 on a tie."""
    if x1 < x2:
        return 0
    if x1 > x2:
        return 1
    return 2


def _clamp(h):
    return min(h, Z_MAX), h > Z_MAX


def transform_first(ic: FamilyParams, x_first: float, v: int,
                    vector_index: int = 0) -> LabeledZ:
    if x_first < 0:
        raise DomainError("x_first must be nonnegative")
    z, clamped = _clamp(float(ic.cumhaz_first(x_first)))
    return LabeledZ(z, 1, vector_index, FIRST, clamped)


def transform_second(ic: FamilyParams, x_first: float, x_second: float, v: int,
                     vector_index: int = 0) -> LabeledZ:
    if v not in (0, 1):
        raise DomainError("a second observation needs v in {0, 1}")
    if x_second < x_first:
        raise DomainError("x_second must not precede x_first")
    z, clamped = _clamp(float(ic.cumhaz_second(x_second, x_first, v)))
    return LabeledZ(z, 2 if v == 0 else 3, vector_index, SECOND, clamped)


def transform_vectors(ic: FamilyParams, x1, x2):
    """Per-pair transform.

    Returns ``(y1, y2, v)`` where ``y2`` is NaN for tied pairs.  Values are
    clamped at ``Z_MAX``.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    v = np.where(x1 < x2, 0, np.where(x1 > x2, 1, 2)).astype(np.int8)
    lo = np.minimum(x1, x2)
    hi = np.maximum(x1, x2)
    y1 = np.minimum(ic.cumhaz_first(lo), Z_MAX)
    tied = v == 2
    y2 = np.minimum(ic.cumhaz_second(hi, lo, np.where(tied, 0, v)), Z_MAX)
    y2 = np.where(tied, np.nan, y2)
    return y1, y2, v


class ZBlock(NamedTuple):
    """A run of consecutive observations produced from a batch of pairs.

    ``time`` is the arrival time measured from the start of the batch,
    with pairs laid end to end (each occupies a window equal to its later
    coordinate).  ``span`` is the total length of the batch.
    """

    z: np.ndarray
    label: np.ndarray
    vector: np.ndarray
    first: np.ndarray
    time: np.ndarray
    span: float
    clamped: int


def stream_block(ic: FamilyParams, x1, x2) -> ZBlock:
    """Interleave a batch of pairs into arrival order."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    n = x1.size
    y1, y2, v = transform_vectors(ic, x1, x2)
    lo = np.minimum(x1, x2)
    hi = np.maximum(x1, x2)
    start = np.concatenate(([0.0], np.cumsum(hi)[:-1]))

    z = np.empty((n, 2))
    z[:, 0] = y1
    z[:, 1] = y2
    label = np.empty((n, 2), dtype=np.int8)
    label[:, 0] = 1
    label[:, 1] = np.where(v == 0, 2, 3)
    t = np.empty((n, 2))
    t[:, 0] = start + lo
    t[:, 1] = start + hi
    keep = np.ones((n, 2), dtype=bool)
    keep[:, 1] = v != 2
    keep = keep.ravel()

    vec = (np.arange(2 * n) >> 1)[keep]
    first = np.zeros((n, 2), dtype=bool)
    first[:, 0] = True
    first = first.ravel()[keep]
    zz = z.ravel()[keep]
    clamped = int(np.count_nonzero(zz >= Z_MAX))
    span = float(start[-1] + hi[-1]) if n else 0.0
    return ZBlock(zz, label.ravel()[keep], vec, first, t.ravel()[keep], span, clamped)


def events_from_pairs(x1, x2, start_index: int = 1) -> list[EventRecord]:
    """Arrival-ordered events for a sequence of complete pairs."""
    events = []
    for k, (a, b) in enumerate(zip(np.asarray(x1, float), np.asarray(x2, float))):
        i = start_index + k
        v = classify(a, b)
        if v == 2:
            events.append(EventRecord(i, TIED, float(a), 2))
        else:
            events.append(EventRecord(i, FIRST, float(min(a, b)), v))
            events.append(EventRecord(i, SECOND, float(max(a, b))))
    return events


def stream_step(ic: FamilyParams, state: dict, ev: EventRecord) -> list[LabeledZ]:
    """Consume one event, updating ``state`` (vector index -> PendingVector)."""
    if ev.x < 0 or not math.isfinite(ev.x):
        raise ProtocolError(f"vector {ev.i}: x must be finite and nonnegative")
    if ev.rank == SECOND:
        pending = state.pop(ev.i, None)
        if pending is None:
            raise ProtocolError(f"vector {ev.i}: second arrival without a first")
        if ev.x < pending.first_value:
            state[ev.i] = pending
            raise ProtocolError(
                f"vector {ev.i}: second value {ev.x} precedes first {pending.first_value}")
        return [transform_second(ic, pending.first_value, ev.x, pending.v, ev.i)]

    if ev.i in state:
        raise ProtocolError(f"vector {ev.i}: first arrival repeated")
    if ev.rank == TIED or (ev.rank == FIRST and ev.v == 2):
        return [transform_first(ic, ev.x, 2, ev.i)]
    if ev.rank != FIRST:
        raise ProtocolError(f"vector {ev.i}: unknown rank {ev.rank!r}")
    if ev.v not in (0, 1):
        raise ProtocolError(f"vector {ev.i}: first arrival needs v in {{0, 1, 2}}")
    state[ev.i] = PendingVector(ev.i, ev.x, ev.v)
    return [transform_first(ic, ev.x, ev.v, ev.i)]


class StreamTransformer:
    """Stateful wrapper around :func:`stream_step` for one event stream."""

    def __init__(self, ic: FamilyParams):
        self.ic = ic
        self.pending: dict[int, PendingVector] = {}
        self.clamped = 0

    def push(self, ev: EventRecord) -> list[LabeledZ]:
        out = stream_step(self.ic, self.pending, ev)
        self.clamped += sum(o.clamped for o in out)
        return out
