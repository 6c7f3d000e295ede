"""Sequential monitoring of an event stream with a calibrated artifact."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .acusum import COMBO_NAMES, DIRECTIONS, BankState, scan_kernel
from .aggregate import CalibrationArtifact
from .baseline import ShewhartLimits
from .distributions import FamilyParams, params_to_dict
from .exceptions import ConfigError, ProtocolError
from .transform import FIRST, SECOND, TIED, EventRecord, StreamTransformer, classify

__all__ = ["AlarmReport", "Monitor", "read_events", "params_digest"]


def params_digest(p: FamilyParams) -> str:
    blob = json.dumps(params_to_dict(p), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class AlarmReport:
    t: int
    i: int
    elapsed: float
    Q: float
    q: dict = field(default_factory=dict)
    combo: str | None = None

    def to_dict(self) -> dict:
        return {"alarm": True, "t": self.t, "i": self.i, "elapsed": self.elapsed,
                "Q": self.Q, "q": self.q, "combo": self.combo}


class Monitor:
    """Feed events one at a time; every observation yields a status record.

    ``initial`` is the bank state at the start of monitoring: a pool
    snapshot for steady-state monitoring, or ``None`` for a cold start
    from zero.
    """

    def __init__(self, artifact: CalibrationArtifact, h: float, chart: str = "acusum",
                 initial: BankState | None = None):
        if chart not in ("acusum", "shewhart"):
            raise ConfigError(f"unknown chart {chart!r}")
        self.artifact = artifact
        self.h = float(h)
        self.chart = chart
        self.bank = initial.copy() if initial is not None else BankState()
        self.transformer = StreamTransformer(artifact.ic)
        self._alpha, self._beta, self._rho = artifact.priors.arrays()
        self._reset_all = artifact.reset_scope == "all"
        self._tables = np.ascontiguousarray(artifact.tables)
        self._limits = ShewhartLimits.from_upper(h) if chart == "shewhart" else None
        self.t = 0
        self.completed = 0.0
        self.alarms: list[AlarmReport] = []

    def _elapsed(self, ev: EventRecord) -> float:
        return self.completed + ev.x

    def push(self, ev: EventRecord) -> list[dict]:
        out = []
        for obs in self.transformer.push(ev):
            self.t += 1
            elapsed = self._elapsed(ev)
            if self.chart == "acusum":
                trace = np.empty((1, 8))
                hit = scan_kernel(np.array([obs.z]), np.array([obs.label], dtype=np.int64),
                                  self.bank.c, self.bank.n, self.bank.s, DIRECTIONS,
                                  self._alpha, self._beta, self._rho, self._reset_all,
                                  self._tables, self.h, trace)
                q = trace[0]
                Q = float(q.max())
                signal = hit == 0
            else:
                Q = obs.z
                signal = obs.z < self._limits.h_lower or obs.z > self._limits.h_upper
            out.append({"t": self.t, "i": obs.vector_index, "z": obs.z,
                        "label": obs.label, "Q": Q})
            if signal:
                if self.chart == "acusum":
                    qd = dict(zip(COMBO_NAMES, q.tolist()))
                    combo = COMBO_NAMES[int(np.argmax(q))]
                else:
                    qd, combo = {}, None
                report = AlarmReport(self.t, obs.vector_index, elapsed, Q, qd, combo)
                self.alarms.append(report)
                out.append(report.to_dict())
        if ev.rank in (SECOND, TIED) or (ev.rank == FIRST and ev.v == 2):
            self.completed += ev.x
        return out


def _event_from_obj(obj, lineno):
    try:
        i = int(obj["i"])
        rank = obj["rank"]
        x = float(obj["x"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"line {lineno}: malformed event ({exc})") from None
    v = obj.get("v")
    if rank == FIRST and v is None:
        raise ProtocolError(f"line {lineno}: field v is required on a first arrival")
    if v is not None:
        v = int(v)
    return EventRecord(i, rank, x, v)


def read_events(stream, fmt: str = "auto"):
    """Yield :class:`EventRecord` from NDJSON events or CSV pairs.

    CSV input has a header with ``x1`` and ``x2``; each row is one complete
    pair and is split into its arrivals.
    """
    it = iter(stream)
    if fmt == "auto":
        first = ""
        for first in it:
            if first.strip():
                break
        else:
            return
        fmt = "ndjson" if first.lstrip().startswith("{") else "csv"
        it = _chain(first, it)
    if fmt == "ndjson":
        for lineno, line in enumerate(it, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            yield _event_from_obj(obj, lineno)
    elif fmt == "csv":
        reader = csv.DictReader(it)
        if reader.fieldnames is None or not {"x1", "x2"} <= set(reader.fieldnames):
            raise ProtocolError("line 1: CSV input needs columns x1,x2")
        for k, row in enumerate(reader, 1):
            try:
                a, b = float(row["x1"]), float(row["x2"])
            except (TypeError, ValueError):
                raise ProtocolError(f"line {k + 1}: x1/x2 must be numbers") from None
            if not (math.isfinite(a) and math.isfinite(b)) or a < 0 or b < 0:
                raise ProtocolError(f"line {k + 1}: x1/x2 must be finite and nonnegative")
            v = classify(a, b)
            if v == 2:
                yield EventRecord(k, TIED, a, 2)
            else:
                yield EventRecord(k, FIRST, min(a, b), v)
                yield EventRecord(k, SECOND, max(a, b))
    else:
        raise ConfigError(f"unknown input format {fmt!r}")


def _chain(first, rest):
    yield first
    yield from rest


def events_to_ndjson(events) -> str:
    buf = io.StringIO()
    for ev in events:
        obj = {"i": ev.i, "rank": ev.rank, "x": ev.x}
        if ev.v is not None and ev.rank != SECOND:
            obj["v"] = ev.v
        buf.write(json.dumps(obj) + "\n")
    return buf.getvalue()
