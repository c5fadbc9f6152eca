"""Conditional handover logic: trigger conditions, monitoring windows, prepared set.

The four conditions compare L3-filtered cell powers (dBm) against offsets (dB);
all comparisons are strict. A condition "fires" once it has held on
``window`` consecutive SSB instants, the firing instant included.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import HandoverConfig, HoMode

log = logging.getLogger(__name__)


def eval_prep(p_serv: float, p_tgt: float, o_prep: float) -> bool:
    return p_serv < p_tgt + o_prep


def eval_exec(p_serv: float, p_tgt: float, o_exec: float) -> bool:
    return p_serv + o_exec < p_tgt


def eval_rel(p_serv: float, p_prepared: float, o_rel: float) -> bool:
    return p_prepared + o_rel < p_serv


def eval_rep(p_strong: float, p_weakest: float, o_rep: float, set_full: bool) -> bool:
    return set_full and p_strong > p_weakest + o_rep


def window_update(hits, ok):
    """Consecutive-hit counter update: increment on satisfaction, reset on violation."""
    return np.where(ok, hits + 1, 0)


class MonitorKind(str, Enum):
    PREP = "prep"
    EXEC = "exec"
    REL = "rel"
    REP = "rep"


@dataclass
class ConditionMonitor:
    kind: MonitorKind
    target: int
    window_len: int = 4
    consecutive_hits: int = 0

    def update(self, satisfied: bool) -> bool:
        self.consecutive_hits = int(window_update(self.consecutive_hits, satisfied))
        return self.consecutive_hits >= self.window_len


def first_fire(trace: Iterable[bool], window_len: int = 4) -> int | None:
    """Index at which a monitor fed ``trace`` first fires, or None."""
    mon = ConditionMonitor(MonitorKind.PREP, -1, window_len)
    for i, ok in enumerate(trace):
        if mon.update(bool(ok)):
            return i
    return None


# -- prepared set -------------------------------------------------------------


class EntryState(str, Enum):
    PENDING = "pending"
    READY = "ready"


@dataclass
class PreparedEntry:
    cell_id: int
    prepared_at: int
    ready_at: int

    def state(self, t: int) -> EntryState:
        return EntryState.READY if t >= self.ready_at else EntryState.PENDING


class PreparedSetFull(Exception):
    pass


class PreparedSet:
    """Ordered prepared-cell list with bounded capacity and no duplicates."""

    def __init__(self, capacity: int = 4):
        self.capacity = capacity
        self.entries: list[PreparedEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, cell: int) -> bool:
        return any(e.cell_id == cell for e in self.entries)

    def __repr__(self) -> str:
        return f"PreparedSet({self.cells()})"

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def cells(self) -> list[int]:
        return [e.cell_id for e in self.entries]

    def ready_cells(self, t: int) -> list[int]:
        return [e.cell_id for e in self.entries if t >= e.ready_at]

    def get(self, cell: int) -> PreparedEntry | None:
        for e in self.entries:
            if e.cell_id == cell:
                return e
        return None

    def add(self, cell: int, t: int, latency: int) -> bool:
        """Add a PENDING entry; returns False for a duplicate, raises when full."""
        if cell in self:
            return False
        if self.full:
            raise PreparedSetFull(cell)
        self.entries.append(PreparedEntry(cell, t, t + latency))
        return True

    def remove(self, cell: int) -> bool:
        for i, e in enumerate(self.entries):
            if e.cell_id == cell:
                del self.entries[i]
                return True
        return False

    def replace(self, weak: int, strong: int, t: int, latency: int) -> None:
        for i, e in enumerate(self.entries):
            if e.cell_id == weak:
                self.entries[i] = PreparedEntry(strong, t, t + latency)
                return
        raise KeyError(weak)

    def swap(self, target: int, previous_serving: int, t: int) -> None:
        """FCHO: previous serving takes the executed target's slot; everything READY now."""
        for i, e in enumerate(self.entries):
            if e.cell_id == target:
                self.entries[i] = PreparedEntry(previous_serving, t, t)
                break
        else:
            raise KeyError(target)
        for e in self.entries:
            e.ready_at = min(e.ready_at, t)

    def clear(self) -> None:
        self.entries.clear()


# -- per-UE operations ----------------------------------------------------------


def apply_preparation(ps: PreparedSet, serving: int, cell: int, t: int, latency: int) -> bool:
    if cell == serving:
        raise ValueError("cannot prepare the serving cell")
    return ps.add(cell, t, latency)


def apply_release(ps: PreparedSet, cell: int) -> bool:
    if not ps.remove(cell):
        log.warning("release of unprepared cell %d ignored", cell)
        return False
    return True


def apply_replace(ps: PreparedSet, l3: Sequence[float], weak: int, strong: int, t: int, latency: int) -> bool:
    cells = ps.cells()
    if not ps.full or strong in ps or weak not in ps or l3[weak] != min(l3[c] for c in cells):
        log.warning("replace %d -> %d rejected for %r", weak, strong, ps)
        return False
    ps.replace(weak, strong, t, latency)
    return True


def execute_handover(ps: PreparedSet, serving: int, target: int, mode: HoMode, t: int) -> int:
    """Apply a completed handover to the prepared set; returns the new serving cell."""
    entry = ps.get(target)
    if entry is None or entry.state(t) is not EntryState.READY:
        raise ValueError(f"handover target {target} is not a READY prepared cell")
    if mode is HoMode.CHO:
        ps.clear()
    else:
        ps.swap(target, serving, t)
    return target


# -- vectorized condition monitoring for all UEs --------------------------------


@dataclass(frozen=True)
class Action:
    kind: str  # "prepare" | "release" | "replace" | "exec"
    cell: int
    other: int = -1  # strong cell for "replace"


MembershipHook = Callable[[int, set, set, int], None]


class HandoverLogic:
    """Monitors and prepared sets for every UE, updated once per SSB instant."""

    def __init__(self, cfg: HandoverConfig, window_len: int, n_ue: int, n_cells: int, on_change: MembershipHook | None = None):
        self.cfg = cfg
        self.mode = cfg.mode
        self.window = window_len
        self.n_cells = n_cells
        self.sets = [PreparedSet(cfg.max_prepared) for _ in range(n_ue)]
        self.member = np.zeros((n_ue, n_cells), dtype=bool)
        self.ready_at = np.full((n_ue, n_cells), np.iinfo(np.int64).max, dtype=np.int64)
        shape = (n_ue, n_cells)
        self.prep_hits = np.zeros(shape, dtype=np.int64)
        self.exec_hits = np.zeros(shape, dtype=np.int64)
        self.rel_hits = np.zeros(shape, dtype=np.int64)
        self.rep_hits = np.zeros(shape, dtype=np.int64)
        self.on_change = on_change

    def _sync(self, u: int, t: int) -> None:
        old = set(np.flatnonzero(self.member[u]).tolist())
        self.member[u] = False
        self.ready_at[u] = np.iinfo(np.int64).max
        for e in self.sets[u].entries:
            self.member[u, e.cell_id] = True
            self.ready_at[u, e.cell_id] = e.ready_at
        new = set(self.sets[u].cells())
        changed = list(old ^ new)
        if changed:
            for h in (self.prep_hits, self.exec_hits, self.rel_hits, self.rep_hits):
                h[u, changed] = 0
            if self.on_change is not None:
                self.on_change(u, new - old, old - new, t)

    def reset_monitors(self, u: int) -> None:
        for h in (self.prep_hits, self.exec_hits, self.rel_hits, self.rep_hits):
            h[u] = 0

    def tick(self, t: int, serving: np.ndarray, l3: np.ndarray, active: np.ndarray) -> dict[int, list[Action]]:
        """Advance all monitors one SSB instant and apply fired release/replace/prepare.

        Execution is only reported (as an ``exec`` action); the caller starts
        the access procedure and later calls :meth:`complete_handover`.
        """
        c = self.cfg
        n = len(serving)
        rows = np.arange(n)
        srv = np.where(active, serving, 0)
        p_serv = l3[rows, srv][:, None]
        is_serv = np.zeros_like(self.member)
        is_serv[rows, srv] = True
        act = active[:, None]
        member = self.member
        ready = member & (self.ready_at <= t)
        outside = ~member & ~is_serv

        full = member.sum(axis=1) >= c.max_prepared
        weakest = np.where(member, l3, np.inf).min(axis=1)[:, None]

        self.exec_hits = window_update(self.exec_hits, act & ready & (p_serv + c.o_exec < l3))
        self.rel_hits = window_update(self.rel_hits, act & ready & (l3 + c.o_rel < p_serv))
        self.prep_hits = window_update(self.prep_hits, act & outside & (p_serv < l3 + c.o_prep))
        self.rep_hits = window_update(self.rep_hits, act & full[:, None] & outside & (l3 > weakest + c.o_rep))

        w = self.window
        exec_f = self.exec_hits >= w
        rel_f = self.rel_hits >= w
        rep_f = self.rep_hits >= w
        prep_f = self.prep_hits >= w
        any_rel = rel_f.any(axis=1)
        candidates = exec_f.any(axis=1) | any_rel | rep_f.any(axis=1) | ((~full | any_rel) & prep_f.any(axis=1))

        out: dict[int, list[Action]] = {}
        for u in np.flatnonzero(candidates).tolist():
            acts = self._decide(u, t, int(serving[u]), l3[u], exec_f[u], rel_f[u], rep_f[u], prep_f[u])
            if acts:
                out[u] = acts
        return out

    def _decide(self, u, t, serving, l3u, exec_f, rel_f, rep_f, prep_f) -> list[Action]:
        ps = self.sets[u]
        fired = np.flatnonzero(exec_f)
        if fired.size:
            # strongest L3 wins among simultaneous execution triggers
            target = int(fired[np.argmax(l3u[fired])])
            return [Action("exec", target)]
        acts: list[Action] = []
        for cell in [x for x in ps.cells() if rel_f[x]]:
            apply_release(ps, cell)
            acts.append(Action("release", cell))
        if ps.full:
            cand = np.flatnonzero(rep_f)
            if cand.size:
                strong = int(cand[np.argmax(l3u[cand])])
                cells = ps.cells()
                weak = cells[int(np.argmin([l3u[x] for x in cells]))]
                if apply_replace(ps, l3u, weak, strong, t, self.cfg.prep_latency_ms):
                    acts.append(Action("replace", weak, strong))
        else:
            cand = np.flatnonzero(prep_f)
            for cell in sorted(cand.tolist(), key=lambda x: (-l3u[x], x)):
                if ps.full:
                    break
                if apply_preparation(ps, serving, cell, t, self.cfg.prep_latency_ms):
                    acts.append(Action("prepare", cell))
        if acts:
            self._sync(u, t)
        return acts

    def complete_handover(self, u: int, serving: int, target: int, t: int) -> None:
        execute_handover(self.sets[u], serving, target, self.mode, t)
        self._sync(u, t)
        self.reset_monitors(u)

    def clear(self, u: int, t: int) -> None:
        self.sets[u].clear()
        self._sync(u, t)
        self.reset_monitors(u)
