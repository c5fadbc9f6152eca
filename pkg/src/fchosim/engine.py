"""Simulation clock, per-tick orchestration and parameter sweeps.

Tick order: motion -> channel -> (SSB instants only) measurement, filtering,
handover monitors and signaling -> link monitoring (SINR, RLF/HOF, outage).
"""

from __future__ import annotations

import itertools
import logging
import statistics
from copy import deepcopy
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .channel import Channel
from .config import HoMode, SimConfig, UeScheme
from .deployment import Topology, build_topology
from .handover import Action, HandoverLogic
from .kpi import KpiReport, RunMeta, build_report
from .link import (
    LinkOutcome,
    SinrState,
    hof_step,
    noise_power_dbm,
    outage_step,
    reestablish,
    rlf_step,
    sinr_grid,
    start_access,
    start_reestablishment,
)
from .signaling import EventKind, EventLedger, SignalEvent, emit_fcho_config_events
from .ue import Measurer, Mobility, PanelConfig, RrcState, RsrpFilter, UeContext, panel_gains

log = logging.getLogger(__name__)

Observer = Callable[["Simulation", int], None]


@dataclass
class RunResult:
    config: SimConfig
    events: list[SignalEvent]
    meta: RunMeta
    report: KpiReport
    ticks: int
    ssb_instants: int


class Simulation:
    def __init__(self, cfg: SimConfig, observer: Observer | None = None, topology: Topology | None = None):
        self.cfg = cfg.validate()
        self.observer = observer
        self.topology = topology or build_topology(cfg)
        self.channel = Channel(self.topology, cfg)
        n = cfg.ue.n_ue
        self.n_ue = n
        self.n_cells = self.topology.n_cells
        self.scheme = cfg.ue.scheme
        self.panels = PanelConfig.from_config(cfg)
        self.mobility = Mobility.drop(
            n,
            self.topology.drop_radius_m,
            cfg.ue.speed_kmh / 3.6,
            self.topology.bounds_radius_m,
            cfg.run.seed,
        )
        self.measurer = Measurer(self.scheme, n, self.panels.n_panels, cfg.run.ssb_period_ms)
        self.filter = RsrpFilter(cfg.ue.l3_coefficient)
        self.logic = HandoverLogic(cfg.handover, cfg.window_len, n, self.n_cells)
        self.ledger = EventLedger()
        self.ues = [UeContext(u, self.scheme) for u in range(n)]
        self.link = [SinrState() for _ in range(n)]
        self.serving = np.full(n, -1, dtype=int)
        self.target = np.full(n, -1, dtype=int)
        self.noise_dbm = noise_power_dbm(cfg.radio.bandwidth_mhz, cfg.radio.noise_figure_db)
        self.t = 0

    # -- helpers ------------------------------------------------------------

    def _state(self, u: int) -> RrcState:
        return self.ues[u].rrc_state

    def _set_state(self, u: int, s: RrcState) -> None:
        self.ues[u].rrc_state = s

    def _best_beam(self, cells: np.ndarray) -> np.ndarray:
        l1 = self.filter.l1
        return np.argmax(l1[np.arange(self.n_ue), cells], axis=-1)

    def _sinr(self, rx: np.ndarray, rxp: np.ndarray | None, ref_cell: np.ndarray) -> np.ndarray:
        rows = np.arange(len(ref_cell))
        ref_beam = self._best_beam(ref_cell)
        if rxp is None:
            sel = rx
        else:
            # receive on the panel that best hears the reference beam
            panel = np.argmax(rxp[rows, :, ref_cell, ref_beam], axis=1)
            sel = rxp[rows, panel]
            for u, p in enumerate(panel.tolist()):
                self.ues[u].serving_panel = p
        return sinr_grid(sel, ref_cell, ref_beam, self.cfg.link.scheduled_beams, self.noise_dbm)

    # -- tick phases --------------------------------------------------------

    def _apply_actions(self, t: int, actions: dict[int, list[Action]]) -> None:
        fcho = self.cfg.handover.mode is HoMode.FCHO
        for u in sorted(actions):
            src = int(self.serving[u])
            ps = self.logic.sets[u]
            for a in actions[u]:
                if a.kind == "prepare":
                    self.ledger.add(t, u, EventKind.MEAS_REPORT_PREP, src, a.cell)
                    self.ledger.add(t, u, EventKind.CHO_PREPARE, src, a.cell)
                    if fcho:
                        cells = ps.cells()
                        emit_fcho_config_events(self.ledger, t, u, src, a.cell, cells[: cells.index(a.cell)])
                elif a.kind == "release":
                    self.ledger.add(t, u, EventKind.CHO_RELEASE, src, a.cell)
                elif a.kind == "replace":
                    self.ledger.add(t, u, EventKind.CHO_REPLACE, a.cell, a.other)
                    if fcho:
                        others = [c for c in ps.cells() if c != a.other]
                        emit_fcho_config_events(self.ledger, t, u, src, a.other, others)
                elif a.kind == "exec":
                    self.ledger.add(t, u, EventKind.HO_EXEC_START, src, a.cell)
                    self.target[u] = a.cell
                    self._set_state(u, RrcState.ACCESSING)
                    start_access(self.link[u], t)
                    self.logic.reset_monitors(u)

    def _ssb_step(self, t: int, rx: np.ndarray, rxp: np.ndarray | None) -> None:
        samples = self.measurer.measure(rx, rxp, t)
        l3 = self.filter.update(samples)
        if t == 0:
            self.serving[:] = np.argmax(l3, axis=1)
        active = np.array([ue.rrc_state is RrcState.CONNECTED for ue in self.ues])
        beams = self._best_beam(self.serving)
        for u, b in enumerate(beams.tolist()):
            self.ues[u].serving_beam = b
        self._apply_actions(t, self.logic.tick(t, self.serving, l3, active))

    def _link_step(self, t: int, rx: np.ndarray, rxp: np.ndarray | None) -> None:
        cfg = self.cfg
        lc = cfg.link
        dt = cfg.run.dt_ms
        accessing = np.array([ue.rrc_state is RrcState.ACCESSING for ue in self.ues])
        ref = np.where(accessing, self.target, self.serving)
        gamma = self._sinr(rx, rxp, ref)
        count = t >= cfg.kpi.warmup_ms
        for u in range(self.n_ue):
            ls = self.link[u]
            state = self._state(u)
            g = float(gamma[u])
            if state is RrcState.CONNECTED:
                if rlf_step(ls, g, dt, lc):
                    self.ledger.add(t, u, EventKind.RLF, int(self.serving[u]), -1)
                    self._fail(u, t)
            elif state is RrcState.ACCESSING:
                out = hof_step(ls, g, t, dt, cfg.handover.access_ms, lc)
                src, tgt = int(self.serving[u]), int(self.target[u])
                if out is LinkOutcome.HO_SUCCESS:
                    self.ledger.add(t, u, EventKind.HO_SUCCESS, src, tgt)
                    self.logic.complete_handover(u, src, tgt, t)
                    self.serving[u] = tgt
                    self.target[u] = -1
                    self._set_state(u, RrcState.CONNECTED)
                elif out is LinkOutcome.HOF:
                    self.ledger.add(t, u, EventKind.HOF, src, tgt)
                    self.target[u] = -1
                    self._fail(u, t)
            else:
                cell = reestablish(ls, self.filter.l3[u], t)
                if cell is not None:
                    self.ledger.add(t, u, EventKind.REESTABLISH, int(self.serving[u]), cell)
                    self.serving[u] = cell
                    self._set_state(u, RrcState.CONNECTED)
                    g = self._sinr_one(u, rx, rxp)
                    ls.gamma = g
            outage_step(ls, g, self._state(u), dt, lc, count)

    def _sinr_one(self, u: int, rx: np.ndarray, rxp: np.ndarray | None) -> float:
        cell = int(self.serving[u])
        beam = int(np.argmax(self.filter.l1[u, cell]))
        if rxp is None:
            sel = rx[u : u + 1]
        else:
            p = int(np.argmax(rxp[u, :, cell, beam]))
            sel = rxp[u : u + 1, p]
        return float(
            sinr_grid(sel, np.array([cell]), np.array([beam]), self.cfg.link.scheduled_beams, self.noise_dbm)[0]
        )

    def _fail(self, u: int, t: int) -> None:
        self.logic.clear(u, t)
        self._set_state(u, RrcState.REESTABLISHING)
        start_reestablishment(self.link[u], t, self.cfg.link)

    # -- run ----------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        dt, ssb = cfg.run.dt_ms, cfg.run.ssb_period_ms
        n_ssb = 0
        iso = self.scheme is UeScheme.ISO
        for k in range(cfg.n_ticks):
            t = k * dt
            self.t = t
            if k:
                self.mobility.step(dt)
            rx, arrival = self.channel.rx_grid(self.mobility.positions, t)
            rxp = None
            if not iso:
                pg = panel_gains(self.mobility.headings, arrival, self.panels)
                rxp = rx[:, None, :, :] + pg[..., None]
            if t % ssb == 0:
                self._ssb_step(t, rx, rxp)
                n_ssb += 1
            self._link_step(t, rx, rxp)
            if self.observer is not None:
                self.observer(self, t)
        events = self.ledger.events()
        meta = RunMeta(
            config_hash=cfg.config_hash(),
            seed=cfg.run.seed,
            mode=cfg.handover.mode.value,
            scheme=cfg.ue.scheme.value,
            speed_kmh=cfg.ue.speed_kmh,
            n_ue=self.n_ue,
            duration_ms=cfg.duration_ms,
            warmup_ms=cfg.kpi.warmup_ms,
            t_fh_ms=cfg.kpi.t_fh_ms,
            t_reest_ms=cfg.link.t_reest_ms,
            outage_ms=tuple(ls.outage_accum for ls in self.link),
        )
        report = build_report(events, meta)
        return RunResult(cfg, events, meta, report, cfg.n_ticks, n_ssb)


def run(cfg: SimConfig, observer: Observer | None = None) -> RunResult:
    return Simulation(cfg, observer).run()


# -- sweeps -----------------------------------------------------------------------


class SweepError(RuntimeError):
    def __init__(self, msg: str, partial: list[KpiReport]):
        super().__init__(msg)
        self.partial = partial


def sweep_configs(
    base: SimConfig,
    modes: Sequence[HoMode],
    schemes: Sequence[UeScheme],
    speeds: Sequence[float],
    seeds: Sequence[int],
) -> list[SimConfig]:
    if not (modes and schemes and speeds and seeds):
        raise ValueError("every sweep axis needs at least one value")
    out = []
    for mode, scheme, speed, seed in itertools.product(modes, schemes, speeds, seeds):
        c = deepcopy(base)
        c.handover.mode = HoMode(mode)
        c.ue.scheme = UeScheme(scheme)
        c.ue.speed_kmh = float(speed)
        c.run.seed = int(seed)
        out.append(c.validate())
    return out


def _run_report(cfg: SimConfig) -> KpiReport:
    return run(cfg).report


def sweep(
    base: SimConfig,
    modes: Sequence[HoMode] = (HoMode.CHO, HoMode.FCHO),
    schemes: Sequence[UeScheme] = (UeScheme.ISO, UeScheme.MPUE_A3, UeScheme.MPUE_A1),
    speeds: Sequence[float] = (60.0,),
    seeds: Sequence[int] = (1,),
    workers: int = 1,
) -> list[KpiReport]:
    """One run per (mode, scheme, speed, seed); reports in that product order."""
    configs = sweep_configs(base, modes, schemes, speeds, seeds)
    done: list[KpiReport] = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_run_report, c) for c in configs]
            for c, f in zip(configs, futures):
                try:
                    done.append(f.result())
                except Exception as e:  # noqa: BLE001 - any run failure aborts the sweep
                    raise SweepError(f"run {_label(c)} failed: {e}", done) from e
        return done
    for c in configs:
        try:
            done.append(_run_report(c))
        except Exception as e:  # noqa: BLE001
            raise SweepError(f"run {_label(c)} failed: {e}", done) from e
        log.info("finished %s", _label(c))
    return done


def _label(c: SimConfig) -> str:
    return f"{c.handover.mode.value}/{c.ue.scheme.value}/{c.ue.speed_kmh:g}kmh/seed{c.run.seed}"


MEAN_FIELDS = (
    "mobility_failure_pct",
    "fast_handover_pct",
    "outage_pct",
    "ho_attempts_per_ue_min",
    "prepare_per_ue_min",
    "release_per_ue_min",
    "replace_per_ue_min",
    "fcho_cfg_per_ue_min",
    "total_cho_events_per_ue_min",
)


def aggregate(reports: Iterable[KpiReport]) -> list[dict]:
    """Mean (and sample std) per (mode, scheme, speed) group across seeds."""
    groups: dict[tuple, list[KpiReport]] = {}
    for r in reports:
        groups.setdefault((r.mode, r.scheme, r.speed_kmh), []).append(r)
    rows = []
    for (mode, scheme, speed), rs in groups.items():
        row: dict = {"mode": mode, "scheme": scheme, "speed_kmh": speed, "n_seeds": len(rs)}
        for f in MEAN_FIELDS:
            vals = [getattr(r, f) for r in rs]
            row[f"{f}_mean"] = round(statistics.fmean(vals), 9)
            row[f"{f}_std"] = round(statistics.stdev(vals), 9) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows


def config_for(base: SimConfig, **fields) -> SimConfig:
    """Copy of ``base`` with dotted-key overrides, e.g. ``config_for(c, **{"run.seed": 3})``."""
    c = deepcopy(base)
    for k, v in fields.items():
        c.set(k, v)
    return c.validate()


__all__ = [
    "RunResult",
    "Simulation",
    "SweepError",
    "aggregate",
    "config_for",
    "run",
    "sweep",
    "sweep_configs",
]
