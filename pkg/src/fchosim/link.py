"""Downlink SINR, RLF/HOF detection, reestablishment and outage accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import LinkConfig
from .ue import RrcState

THERMAL_NOISE_DBM_HZ = -174.0


def noise_power_dbm(bandwidth_mhz: float, noise_figure_db: float) -> float:
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_mhz * 1e6) + noise_figure_db


def db2lin(x):
    return np.power(10.0, np.asarray(x) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


def sinr_db(signal_dbm: float, interference_dbm, noise_dbm: float) -> float:
    """SINR of one link; ``interference_dbm`` holds one mean power per interfering cell."""
    i = float(np.sum(db2lin(interference_dbm))) if len(np.atleast_1d(interference_dbm)) else 0.0
    return float(lin2db(db2lin(signal_dbm) / (db2lin(noise_dbm) + i)))


def interference_per_cell(rx_lin: np.ndarray, k_beams: int) -> np.ndarray:
    """Mean linear power of each cell's ``k_beams`` strongest beams; (..., C, B) -> (..., C)."""
    n_b = rx_lin.shape[-1]
    k = min(k_beams, n_b)
    top = np.partition(rx_lin, n_b - k, axis=-1)[..., n_b - k :]
    return top.mean(axis=-1)


def sinr_grid(rx_dbm: np.ndarray, ref_cell: np.ndarray, ref_beam: np.ndarray, k_beams: int, noise_dbm: float) -> np.ndarray:
    """Vectorized SINR (dB) for n UEs: rx (n, C, B); reference cell/beam per UE.

    Full load: every other cell transmits on its ``k_beams`` strongest beams toward the UE.
    """
    rows = np.arange(rx_dbm.shape[0])
    lin = db2lin(rx_dbm)
    s = lin[rows, ref_cell, ref_beam]
    per_cell = interference_per_cell(lin, k_beams)
    per_cell[rows, ref_cell] = 0.0
    return lin2db(s / (db2lin(noise_dbm) + per_cell.sum(axis=1)))


class LinkOutcome(str, Enum):
    NONE = "none"
    RLF = "rlf"
    HOF = "hof"
    HO_SUCCESS = "ho_success"
    REESTABLISHED = "reestablished"


@dataclass
class SinrState:
    gamma: float = math.inf
    rlf_timer: int | None = None  # elapsed ms while running
    hof_timer: int = 0  # consecutive ms with target below gamma_out during access
    access_start: int | None = None
    reest_end: int | None = None
    in_outage: bool = False
    outage_accum: int = 0


def rlf_step(state: SinrState, gamma: float, dt: int, cfg: LinkConfig) -> bool:
    """Advance the RLF timer one tick; True when RLF is declared."""
    state.gamma = gamma
    if state.rlf_timer is None:
        if gamma < cfg.gamma_out_db:
            state.rlf_timer = dt
    elif gamma > cfg.gamma_in_db:
        state.rlf_timer = None
    else:
        state.rlf_timer += dt
    if state.rlf_timer is not None and state.rlf_timer >= cfg.t_rlf_ms:
        state.rlf_timer = None
        return True
    return False


def hof_step(state: SinrState, gamma_target: float, t: int, dt: int, access_ms: int, cfg: LinkConfig) -> LinkOutcome:
    """One tick of random access toward the target cell.

    Access completes at the first tick at least ``access_ms`` after the start with
    target SINR >= gamma_out; HOF when the target stays below gamma_out for T_HOF.
    """
    state.gamma = gamma_target
    below = gamma_target < cfg.gamma_out_db
    state.hof_timer = state.hof_timer + dt if below else 0
    if t - state.access_start >= access_ms and not below:
        state.access_start = None
        state.hof_timer = 0
        return LinkOutcome.HO_SUCCESS
    if state.hof_timer >= cfg.t_hof_ms:
        state.access_start = None
        state.hof_timer = 0
        return LinkOutcome.HOF
    return LinkOutcome.NONE


def start_access(state: SinrState, t: int) -> None:
    state.access_start = t
    state.hof_timer = 0
    state.rlf_timer = None


def start_reestablishment(state: SinrState, t: int, cfg: LinkConfig) -> None:
    state.reest_end = t + cfg.t_reest_ms
    state.rlf_timer = None
    state.access_start = None
    state.hof_timer = 0


def reestablish(state: SinrState, l3: np.ndarray, t: int) -> int | None:
    """Return the cell to reconnect to (strongest L3) once the reestablishment time has elapsed."""
    if state.reest_end is None or t < state.reest_end:
        return None
    state.reest_end = None
    return int(np.argmax(l3))


def outage_step(state: SinrState, gamma: float, rrc: RrcState, dt: int, cfg: LinkConfig, count: bool = True) -> None:
    state.in_outage = rrc is not RrcState.CONNECTED or gamma < cfg.gamma_out_db
    if state.in_outage and count:
        state.outage_accum += dt
