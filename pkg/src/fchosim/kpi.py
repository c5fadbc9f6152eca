"""Mobility KPIs: failures, fast handovers, outage and signaling overhead."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .signaling import EventKind, OverheadCounters, ResourceBook, SignalEvent, count_overhead


class ReportError(RuntimeError):
    """A report failed its internal consistency checks."""


class FastHo(str, Enum):
    NONE = "none"
    PING_PONG = "ping_pong"
    SHORT_STAY = "short_stay"


class HoOutcome(str, Enum):
    SUCCESS = "success"
    HOF = "hof"


@dataclass(frozen=True)
class HoRecord:
    ue_id: int
    time: int
    from_cell: int
    to_cell: int
    outcome: HoOutcome


def classify_fast_handover(prev: HoRecord | None, cur: HoRecord, t_fh_ms: int) -> FastHo:
    """Classify ``cur`` given the UE's previous successful handover in the same chain."""
    if prev is None or cur.time - prev.time > t_fh_ms or prev.to_cell != cur.from_cell:
        return FastHo.NONE
    return FastHo.PING_PONG if cur.to_cell == prev.from_cell else FastHo.SHORT_STAY


def mobility_failure_pct(hofs: int, rlfs: int, successes: int) -> float:
    denom = successes + hofs + rlfs
    return 100.0 * (hofs + rlfs) / denom if denom else 0.0


def outage_pct(durations_ms: Sequence[float], n_ue: int, simulated_ms: float) -> float:
    return 100.0 * sum(durations_ms) / (n_ue * simulated_ms)


def ho_records(events: Iterable[SignalEvent]) -> list[HoRecord]:
    out = []
    for ev in events:
        if ev.kind is EventKind.HO_SUCCESS:
            out.append(HoRecord(ev.ue_id, ev.time, ev.source_cell, ev.target_cell, HoOutcome.SUCCESS))
        elif ev.kind is EventKind.HOF:
            out.append(HoRecord(ev.ue_id, ev.time, ev.source_cell, ev.target_cell, HoOutcome.HOF))
    return out


@dataclass(frozen=True)
class RunMeta:
    """Run facts a report needs beyond the events; also written as events.csv header."""

    config_hash: str
    seed: int
    mode: str
    scheme: str
    speed_kmh: float
    n_ue: int
    duration_ms: int
    warmup_ms: int
    t_fh_ms: int
    t_reest_ms: int
    outage_ms: tuple[int, ...] = field(default=())

    def to_header(self) -> dict[str, str]:
        d = asdict(self)
        d["outage_ms"] = ";".join(str(x) for x in self.outage_ms)
        return {k: str(v) for k, v in d.items()}

    @classmethod
    def from_header(cls, meta: Mapping[str, str]) -> "RunMeta":
        try:
            out = meta.get("outage_ms", "")
            return cls(
                config_hash=meta["config_hash"],
                seed=int(meta["seed"]),
                mode=meta["mode"],
                scheme=meta["scheme"],
                speed_kmh=float(meta["speed_kmh"]),
                n_ue=int(meta["n_ue"]),
                duration_ms=int(meta["duration_ms"]),
                warmup_ms=int(meta["warmup_ms"]),
                t_fh_ms=int(meta["t_fh_ms"]),
                t_reest_ms=int(meta["t_reest_ms"]),
                outage_ms=tuple(int(x) for x in out.split(";") if x),
            )
        except (KeyError, ValueError) as e:
            raise ReportError(f"incomplete run metadata: {e}") from None

    @property
    def measured_ms(self) -> int:
        return self.duration_ms - self.warmup_ms


@dataclass
class KpiReport:
    config_hash: str
    seed: int
    mode: str
    scheme: str
    speed_kmh: float
    n_ue: int
    measured_s: float
    ho_attempts: int
    successes: int
    hofs: int
    rlfs: int
    mobility_failures: int
    mobility_failure_pct: float
    ping_pongs: int
    short_stays: int
    fast_handovers: int
    fast_handover_pct: float
    outage_pct: float
    ho_attempts_per_ue_min: float
    prepare_events: int
    release_events: int
    replace_events: int
    fcho_cfg_events: int
    prepare_per_ue_min: float
    release_per_ue_min: float
    replace_per_ue_min: float
    fcho_cfg_per_ue_min: float
    total_cho_events_per_ue_min: float
    reestablishments: int
    reservation_s_per_ue_min: float
    peak_outstanding_preparations: int

    def to_dict(self) -> dict:
        return {k: (round(v, 9) if isinstance(v, float) else v) for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def columns(cls) -> list[str]:
        return list(cls.__dataclass_fields__)


def reports_csv_text(reports: Sequence[KpiReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=KpiReport.columns(), lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.to_dict())
    return buf.getvalue()


def fast_handover_counts(events: Sequence[SignalEvent], t_fh_ms: int, t_from: int = 0) -> tuple[int, int]:
    """(ping_pongs, short_stays) among successes at or after ``t_from``.

    A failure or reestablishment breaks the chain of the affected UE.
    """
    prev: dict[int, HoRecord | None] = {}
    pp = ss = 0
    for ev in events:
        if ev.kind is EventKind.HO_SUCCESS:
            rec = HoRecord(ev.ue_id, ev.time, ev.source_cell, ev.target_cell, HoOutcome.SUCCESS)
            cls = classify_fast_handover(prev.get(ev.ue_id), rec, t_fh_ms)
            if ev.time >= t_from:
                pp += cls is FastHo.PING_PONG
                ss += cls is FastHo.SHORT_STAY
            prev[ev.ue_id] = rec
        elif ev.kind in (EventKind.HOF, EventKind.RLF, EventKind.REESTABLISH):
            prev[ev.ue_id] = None
    return pp, ss


def check_accounting(events: Sequence[SignalEvent], meta: RunMeta) -> None:
    """Per-UE protocol invariants; raises :class:`ReportError` on the first violation."""
    by_ue: dict[int, list[SignalEvent]] = defaultdict(list)
    for ev in events:
        by_ue[ev.ue_id].append(ev)
    for ue, evs in by_ue.items():
        last_t = -1
        open_exec: int | None = None
        exec_time = 0
        open_failure: SignalEvent | None = None
        for ev in evs:
            if ev.time < last_t:
                raise ReportError(f"UE {ue}: time regression at {ev.time}")
            last_t = ev.time
            k = ev.kind
            if k is EventKind.HO_EXEC_START:
                if open_exec is not None or open_failure is not None:
                    raise ReportError(f"UE {ue}: execution at {ev.time} while busy")
                open_exec = ev.target_cell
                exec_time = ev.time
            elif k in (EventKind.HO_SUCCESS, EventKind.HOF):
                if open_exec != ev.target_cell:
                    raise ReportError(f"UE {ue}: {k.value} at {ev.time} without matching HO_EXEC_START")
                open_exec = None
                if ev.source_cell == ev.target_cell:
                    raise ReportError(f"UE {ue}: handover to own serving cell at {ev.time}")
            if k in (EventKind.HOF, EventKind.RLF):
                if open_failure is not None:
                    raise ReportError(f"UE {ue}: failure at {ev.time} before reestablishment")
                open_failure = ev
            elif k is EventKind.REESTABLISH:
                if open_failure is None:
                    raise ReportError(f"UE {ue}: REESTABLISH at {ev.time} without failure")
                open_failure = None
        if open_exec is not None and exec_time < meta.duration_ms - 1000:
            raise ReportError(f"UE {ue}: execution toward {open_exec} never resolved")
        # a failure may still be reestablishing when the run ends
        if open_failure is not None and open_failure.time + meta.t_reest_ms < meta.duration_ms:
            raise ReportError(f"UE {ue}: failure at {open_failure.time} never reestablished")


def build_report(events: Sequence[SignalEvent], meta: RunMeta) -> KpiReport:
    """Aggregate a run's KPIs from its ledger; only events after warm-up are counted."""
    check_accounting(events, meta)
    if len(meta.outage_ms) != meta.n_ue:
        raise ReportError(f"expected {meta.n_ue} outage durations, got {len(meta.outage_ms)}")
    if any(o < 0 or o > meta.measured_ms for o in meta.outage_ms):
        raise ReportError("per-UE outage outside [0, measured time]")

    counted = [ev for ev in events if ev.time >= meta.warmup_ms]
    n = defaultdict(int)
    for ev in counted:
        n[ev.kind] += 1
    succ, hofs, rlfs = n[EventKind.HO_SUCCESS], n[EventKind.HOF], n[EventKind.RLF]
    pp, ss = fast_handover_counts(events, meta.t_fh_ms, meta.warmup_ms)
    minutes = meta.measured_ms / 60000.0
    ov: OverheadCounters = count_overhead(counted, meta.n_ue, minutes)
    denom = succ + hofs + rlfs

    book = ResourceBook(fcho=meta.mode == "fcho", t_start=meta.warmup_ms)
    for ev in events:
        book.apply(ev)
    book.finish(meta.duration_ms)

    rep = KpiReport(
        config_hash=meta.config_hash,
        seed=meta.seed,
        mode=meta.mode,
        scheme=meta.scheme,
        speed_kmh=meta.speed_kmh,
        n_ue=meta.n_ue,
        measured_s=meta.measured_ms / 1000.0,
        ho_attempts=succ + hofs,
        successes=succ,
        hofs=hofs,
        rlfs=rlfs,
        mobility_failures=hofs + rlfs,
        mobility_failure_pct=mobility_failure_pct(hofs, rlfs, succ),
        ping_pongs=pp,
        short_stays=ss,
        fast_handovers=pp + ss,
        fast_handover_pct=100.0 * (pp + ss) / denom if denom else 0.0,
        outage_pct=outage_pct(meta.outage_ms, meta.n_ue, meta.measured_ms),
        ho_attempts_per_ue_min=(succ + hofs) / (meta.n_ue * minutes),
        prepare_events=n[EventKind.CHO_PREPARE],
        release_events=n[EventKind.CHO_RELEASE],
        replace_events=n[EventKind.CHO_REPLACE],
        fcho_cfg_events=n[EventKind.FCHO_CFG_REQUEST] + n[EventKind.FCHO_CFG_MODIFICATION],
        prepare_per_ue_min=ov.prepare_per_ue_min,
        release_per_ue_min=ov.release_per_ue_min,
        replace_per_ue_min=ov.replace_per_ue_min,
        fcho_cfg_per_ue_min=ov.fcho_cfg_per_ue_min,
        total_cho_events_per_ue_min=ov.total_cho_events_per_ue_min,
        reestablishments=n[EventKind.REESTABLISH],
        reservation_s_per_ue_min=book.reserved_ms / 1000.0 / (meta.n_ue * minutes),
        peak_outstanding_preparations=max(book.peak.values(), default=0),
    )
    _check_report(rep)
    return rep


def _check_report(r: KpiReport) -> None:
    if r.ho_attempts != r.successes + r.hofs:
        raise ReportError("ho_attempts != successes + hofs")
    if r.ping_pongs + r.short_stays > r.successes:
        raise ReportError("more fast handovers than successes")
    for name in ("mobility_failure_pct", "fast_handover_pct", "outage_pct"):
        v = getattr(r, name)
        if not 0.0 <= v <= 100.0:
            raise ReportError(f"{name}={v} outside [0, 100]")
