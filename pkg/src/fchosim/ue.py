"""UE motion, antenna panels, measurement acquisition and L1/L3 filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import SimConfig, UeScheme
from .deployment import hexagon_contains, hexagon_edge_normals, wrap_deg
from .rng import substream


class RrcState(str, Enum):
    CONNECTED = "connected"
    ACCESSING = "accessing"
    REESTABLISHING = "reestablishing"


@dataclass(frozen=True)
class PanelConfig:
    offsets_deg: tuple[float, ...] = (0.0, 120.0, -120.0)
    peak_gain_dbi: float = 5.0
    floor_dbi: float = -10.0
    # offset at which the pattern has lost 12 dB
    pattern_width_deg: float = 90.0

    @property
    def n_panels(self) -> int:
        return len(self.offsets_deg)

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "PanelConfig":
        u = cfg.ue
        return cls(tuple(u.panel_offsets_deg), u.panel_peak_gain_dbi, u.panel_floor_dbi)


def panel_pattern(offset_deg, panels: PanelConfig = PanelConfig()):
    g = panels.peak_gain_dbi - 12.0 * (np.asarray(offset_deg, dtype=float) / panels.pattern_width_deg) ** 2
    return np.maximum(g, panels.floor_dbi)


def panel_rx_gain(
    scheme: UeScheme, heading_deg: float, panel: int, arrival_azimuth_deg: float, panels: PanelConfig = PanelConfig()
) -> float:
    """Gain (dBi) of one UE panel toward a signal arriving from ``arrival_azimuth_deg``."""
    if scheme is UeScheme.ISO:
        return 0.0
    offset = wrap_deg(arrival_azimuth_deg - (heading_deg + panels.offsets_deg[panel]))
    return float(panel_pattern(offset, panels))


def panel_gains(headings: np.ndarray, arrival: np.ndarray, panels: PanelConfig) -> np.ndarray:
    """Vectorized panel gains: headings (n,), arrival (n, n_cells) -> (n, n_panels, n_cells)."""
    bores = headings[:, None] + np.asarray(panels.offsets_deg)[None, :]
    offset = wrap_deg(arrival[:, None, :] - bores[:, :, None])
    return panel_pattern(offset, panels)


# -- motion ---------------------------------------------------------------


def step_motion(
    position: np.ndarray,
    heading_deg: float,
    speed_mps: float,
    dt_ms: float,
    bounds_radius: float,
    rng: np.random.Generator,
    max_tries: int = 16,
) -> tuple[np.ndarray, float]:
    """Advance one UE along its heading; bounce inward off the hexagonal boundary."""
    step = speed_mps * dt_ms * 1e-3
    h = math.radians(heading_deg)
    new = position + step * np.array([math.cos(h), math.sin(h)])
    if hexagon_contains(new, bounds_radius)[0]:
        return new, heading_deg
    normals = hexagon_edge_normals()
    apothem = bounds_radius * math.cos(math.pi / 6)
    crossed = normals[(normals @ new) > apothem]
    inward = -crossed.sum(axis=0)
    base = math.degrees(math.atan2(inward[1], inward[0]))
    for _ in range(max_tries):
        heading_deg = float(wrap_deg(base + rng.uniform(-90.0, 90.0)))
        h = math.radians(heading_deg)
        cand = position + step * np.array([math.cos(h), math.sin(h)])
        if hexagon_contains(cand, bounds_radius)[0]:
            return cand, heading_deg
    return position.copy(), heading_deg


class Mobility:
    """Straight-line motion for all UEs with per-UE random bounce streams."""

    def __init__(self, positions: np.ndarray, headings: np.ndarray, speed_mps: float, bounds_radius: float, seed: int):
        self.positions = np.array(positions, dtype=float)
        self.headings = np.array(headings, dtype=float)
        self.speed = speed_mps
        self.bounds_radius = bounds_radius
        self._rngs = [substream(seed, "motion", u) for u in range(len(self.positions))]

    @classmethod
    def drop(cls, n_ue: int, drop_radius: float, speed_mps: float, bounds_radius: float, seed: int) -> "Mobility":
        """Uniform 2D drop over the hexagonal deployment area with uniform headings."""
        rng = substream(seed, "drop")
        pos = np.empty((n_ue, 2))
        k = 0
        while k < n_ue:
            cand = rng.uniform(-drop_radius, drop_radius, (2 * n_ue, 2))
            cand = cand[hexagon_contains(cand, drop_radius)]
            take = min(len(cand), n_ue - k)
            pos[k : k + take] = cand[:take]
            k += take
        headings = rng.uniform(-180.0, 180.0, n_ue)
        return cls(pos, headings, speed_mps, bounds_radius, seed)

    def step(self, dt_ms: float) -> None:
        step = self.speed * dt_ms * 1e-3
        h = np.radians(self.headings)
        new = self.positions + step * np.stack([np.cos(h), np.sin(h)], axis=1)
        inside = hexagon_contains(new, self.bounds_radius)
        self.positions[inside] = new[inside]
        for u in np.flatnonzero(~inside):
            self.positions[u], self.headings[u] = step_motion(
                self.positions[u], self.headings[u], self.speed, dt_ms, self.bounds_radius, self._rngs[u]
            )


# -- measurement ------------------------------------------------------------


class Measurer:
    """Turns per-panel received powers into per-(cell, beam) RSRP samples.

    ISO uses the 0 dBi power directly, MPUE-A3 the best of all panels, and
    MPUE-A1 refreshes only the active panel (round-robin per SSB instant) while
    the other panels keep their last reading.
    """

    def __init__(self, scheme: UeScheme, n_ue: int, n_panels: int, ssb_period_ms: int):
        self.scheme = scheme
        self.ssb_period_ms = ssb_period_ms
        self.active = np.zeros(n_ue, dtype=int)
        self.stored: np.ndarray | None = None
        self.stored_at: np.ndarray | None = None
        self.n_panels = n_panels

    def measure(self, rx: np.ndarray, rx_panels: np.ndarray | None, t_ms: int) -> np.ndarray:
        """``rx`` (n, C, B) at 0 dBi; ``rx_panels`` (n, P, C, B) or None for ISO."""
        if t_ms % self.ssb_period_ms:
            raise RuntimeError(f"measurement requested off the SSB grid at t={t_ms} ms")
        if self.scheme is UeScheme.ISO:
            return rx.copy()
        if self.scheme is UeScheme.MPUE_A3:
            return rx_panels.max(axis=1)
        n = rx_panels.shape[0]
        if self.stored is None:
            self.stored = np.full(rx_panels.shape, -np.inf)
            self.stored_at = np.full((n, self.n_panels), -1, dtype=np.int64)
        idx = np.arange(n)
        self.stored[idx, self.active] = rx_panels[idx, self.active]
        self.stored_at[idx, self.active] = t_ms
        self.active = (self.active + 1) % self.n_panels
        return self.stored.max(axis=1)


class RsrpFilter:
    """L1 two-sample moving average per beam, strongest-beam cell quality, L3 exponential filter."""

    def __init__(self, l3_coefficient: float = 0.5):
        self.a = l3_coefficient
        self.prev: np.ndarray | None = None
        self.l1: np.ndarray | None = None
        self.l3: np.ndarray | None = None

    def update(self, samples: np.ndarray) -> np.ndarray:
        """Ingest one SSB instant of samples (..., C, B); return L3 per cell (..., C)."""
        self.l1 = samples if self.prev is None else 0.5 * (samples + self.prev)
        self.prev = samples
        quality = self.l1.max(axis=-1)
        self.l3 = quality.copy() if self.l3 is None else l3_update(self.l3, quality, self.a)
        return self.l3


def l3_update(previous, value, a: float = 0.5):
    return (1.0 - a) * previous + a * value


@dataclass
class UeContext:
    """Per-UE radio and mobility-management state owned by the engine."""

    id: int
    scheme: UeScheme
    serving_cell: int = -1
    serving_beam: int = 0  # 0-based
    rrc_state: RrcState = RrcState.CONNECTED
    serving_panel: int = 0
    last_success: tuple[int, int, int] | None = field(default=None, repr=False)
