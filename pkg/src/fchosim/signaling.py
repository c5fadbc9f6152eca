"""Append-only protocol event ledger, overhead counters and events.csv I/O."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence


class EventKind(str, Enum):
    MEAS_REPORT_PREP = "MEAS_REPORT_PREP"
    CHO_PREPARE = "CHO_PREPARE"
    CHO_RELEASE = "CHO_RELEASE"
    CHO_REPLACE = "CHO_REPLACE"
    FCHO_CFG_REQUEST = "FCHO_CFG_REQUEST"
    FCHO_CFG_MODIFICATION = "FCHO_CFG_MODIFICATION"
    HO_EXEC_START = "HO_EXEC_START"
    HO_SUCCESS = "HO_SUCCESS"
    HOF = "HOF"
    RLF = "RLF"
    REESTABLISH = "REESTABLISH"


KIND_ORDER = {k: i for i, k in enumerate(EventKind)}
CSV_COLUMNS = ("time_ms", "ue_id", "kind", "source_cell", "target_cell")


class LedgerConsistencyError(RuntimeError):
    pass


class LedgerFormatError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class SignalEvent:
    time: int
    ue_id: int
    kind: EventKind
    source_cell: int = -1
    target_cell: int = -1

    def sort_key(self) -> tuple[int, int, int]:
        return (self.time, self.ue_id, KIND_ORDER[self.kind])


class EventLedger:
    """Per-run event record; enforces per-UE time order and execution pairing."""

    def __init__(self):
        self._events: list[SignalEvent] = []
        self._last_time: dict[int, int] = {}
        self._open_exec: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._events)

    def record(self, ev: SignalEvent) -> None:
        last = self._last_time.get(ev.ue_id)
        if last is not None and ev.time < last:
            raise LedgerConsistencyError(f"time regression for UE {ev.ue_id}: {ev.time} < {last}")
        if ev.kind is EventKind.HO_EXEC_START:
            self._open_exec[ev.ue_id] = ev.target_cell
        elif ev.kind in (EventKind.HO_SUCCESS, EventKind.HOF):
            if self._open_exec.get(ev.ue_id) != ev.target_cell:
                raise LedgerConsistencyError(
                    f"{ev.kind.value} for UE {ev.ue_id} -> {ev.target_cell} without HO_EXEC_START"
                )
            del self._open_exec[ev.ue_id]
        self._last_time[ev.ue_id] = ev.time
        self._events.append(ev)

    def add(self, time: int, ue_id: int, kind: EventKind, source: int = -1, target: int = -1) -> None:
        self.record(SignalEvent(int(time), int(ue_id), kind, int(source), int(target)))

    def events(self) -> list[SignalEvent]:
        """Events in (time, ue_id, kind) order; ties keep insertion order."""
        return sorted(self._events, key=SignalEvent.sort_key)

    @classmethod
    def from_events(cls, events: Iterable[SignalEvent]) -> "EventLedger":
        led = cls()
        for ev in sorted(events, key=SignalEvent.sort_key):
            led.record(ev)
        return led


def emit_fcho_config_events(
    ledger: EventLedger, t: int, ue_id: int, serving: int, new_cell: int, existing: Sequence[int]
) -> int:
    """Configuration exchange after ``new_cell`` is prepared in FCHO mode.

    One request toward the new cell (its transitions back to serving and to
    every other prepared cell), and one modification toward each cell that
    was already prepared. Returns the number of messages.
    """
    ledger.add(t, ue_id, EventKind.FCHO_CFG_REQUEST, serving, new_cell)
    for c in existing:
        ledger.add(t, ue_id, EventKind.FCHO_CFG_MODIFICATION, serving, c)
    return 1 + len(existing)


@dataclass(frozen=True)
class OverheadCounters:
    prepare_per_ue_min: float = 0.0
    release_per_ue_min: float = 0.0
    replace_per_ue_min: float = 0.0
    fcho_cfg_per_ue_min: float = 0.0
    total_cho_events_per_ue_min: float = 0.0


def count_overhead(events: Iterable[SignalEvent], n_ue: int, sim_minutes: float) -> OverheadCounters:
    if sim_minutes <= 0:
        raise ValueError("sim_minutes must be positive")
    counts: dict[EventKind, int] = defaultdict(int)
    for ev in events:
        counts[ev.kind] += 1
    norm = 1.0 / (n_ue * sim_minutes)
    prep = counts[EventKind.CHO_PREPARE] * norm
    rel = counts[EventKind.CHO_RELEASE] * norm
    rep = counts[EventKind.CHO_REPLACE] * norm
    cfg = (counts[EventKind.FCHO_CFG_REQUEST] + counts[EventKind.FCHO_CFG_MODIFICATION]) * norm
    return OverheadCounters(prep, rel, rep, cfg, prep + rel + rep)


class ResourceBook:
    """gNB-side view of outstanding handover preparations, rebuilt from events.

    Tracks per-cell outstanding preparations and integrates reservation time
    (cell-ms) inside ``[t_start, t_end]``. No capacity limit is imposed.
    """

    def __init__(self, fcho: bool, t_start: int = 0):
        self.fcho = fcho
        self.t_start = t_start
        self.prepared: dict[int, dict[int, int]] = defaultdict(dict)  # ue -> {cell: since}
        self.outstanding: dict[int, int] = defaultdict(int)
        self.peak: dict[int, int] = defaultdict(int)
        self.reserved_ms = 0

    def _reserve(self, ue: int, cell: int, t: int) -> None:
        if cell in self.prepared[ue]:
            return
        self.prepared[ue][cell] = t
        self.outstanding[cell] += 1
        self.peak[cell] = max(self.peak[cell], self.outstanding[cell])

    def _free(self, ue: int, cell: int, t: int) -> None:
        since = self.prepared[ue].pop(cell, None)
        if since is None:
            return
        self.outstanding[cell] -= 1
        self.reserved_ms += max(0, t - max(since, self.t_start))

    def apply(self, ev: SignalEvent) -> None:
        k, u = ev.kind, ev.ue_id
        if k is EventKind.CHO_PREPARE:
            self._reserve(u, ev.target_cell, ev.time)
        elif k is EventKind.CHO_RELEASE:
            self._free(u, ev.target_cell, ev.time)
        elif k is EventKind.CHO_REPLACE:
            self._free(u, ev.source_cell, ev.time)
            self._reserve(u, ev.target_cell, ev.time)
        elif k is EventKind.HO_SUCCESS:
            self._free(u, ev.target_cell, ev.time)
            if self.fcho:
                self._reserve(u, ev.source_cell, ev.time)
            else:
                for cell in list(self.prepared[u]):
                    self._free(u, cell, ev.time)
        elif k in (EventKind.HOF, EventKind.RLF):
            for cell in list(self.prepared[u]):
                self._free(u, cell, ev.time)

    def finish(self, t_end: int) -> None:
        for u in list(self.prepared):
            for cell in list(self.prepared[u]):
                self._free(u, cell, t_end)

    def prepared_cells(self, ue: int) -> set[int]:
        return set(self.prepared[ue])


# -- events.csv -----------------------------------------------------------------


def write_events_csv(path: str | Path, events: Sequence[SignalEvent], meta: dict) -> None:
    Path(path).write_text(events_csv_text(events, meta))


def events_csv_text(events: Sequence[SignalEvent], meta: dict) -> str:
    buf = io.StringIO()
    for k in sorted(meta):
        buf.write(f"# {k}={meta[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for ev in events:
        w.writerow((ev.time, ev.ue_id, ev.kind.value, ev.source_cell, ev.target_cell))
    return buf.getvalue()


def read_events_csv(path: str | Path) -> tuple[list[SignalEvent], dict[str, str]]:
    """Parse events.csv; raises :class:`LedgerFormatError` naming the first bad line."""
    meta: dict[str, str] = {}
    events: list[SignalEvent] = []
    header_seen = False
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if not sep:
                    raise LedgerFormatError(lineno, "metadata line without '='")
                meta[key] = value
                continue
            if not header_seen:
                if tuple(line.split(",")) != CSV_COLUMNS:
                    raise LedgerFormatError(lineno, f"expected header {','.join(CSV_COLUMNS)}")
                header_seen = True
                continue
            if not line:
                continue
            row = line.split(",")
            if len(row) != len(CSV_COLUMNS):
                raise LedgerFormatError(lineno, f"expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            try:
                events.append(SignalEvent(int(row[0]), int(row[1]), EventKind(row[2]), int(row[3]), int(row[4])))
            except ValueError as e:
                raise LedgerFormatError(lineno, str(e)) from None
    if not header_seen:
        raise LedgerFormatError(0, "missing header row")
    return events, meta
