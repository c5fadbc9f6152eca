"""Propagation: UMi-LOS path loss, correlated shadowing and optional fast fading."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SimConfig
from .deployment import Topology, tx_gain, wrap_deg
from .rng import substream

SPEED_OF_LIGHT = 299_792_458.0


def path_loss(distance_3d, carrier_ghz: float):
    """UMi LOS path loss in dB; distances below 1 m are clamped to 1 m."""
    d = np.maximum(np.asarray(distance_3d, dtype=float), 1.0)
    pl = 32.4 + 21.0 * np.log10(d) + 20.0 * math.log10(carrier_ghz)
    return float(pl) if pl.ndim == 0 else pl


def _exponential_fields(n: int, pitch: float, d_cor: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent n x n unit-variance fields with exp(-d/d_cor) correlation.

    Circulant embedding on a 2n torus; each complex FFT yields two fields.
    """
    m = 2 * n
    idx = np.minimum(np.arange(m), m - np.arange(m)) * pitch
    dist = np.hypot(idx[:, None], idx[None, :])
    eig = np.fft.fft2(np.exp(-dist / d_cor)).real
    sqrt_eig = np.sqrt(np.clip(eig, 0.0, None) / (m * m))
    out = np.empty((count, n, n))
    k = 0
    while k < count:
        z = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        f = np.fft.fft2(sqrt_eig * z)
        for part in (f.real, f.imag):
            if k < count:
                out[k] = part[:n, :n]
                k += 1
    return out


@dataclass(frozen=True)
class ShadowMap:
    """Per-cell shadowing fields on a square grid, bilinearly interpolated."""

    grid: np.ndarray  # (n_cells, n, n), indexed [cell, iy, ix]
    origin: float  # coordinate of grid index 0 on both axes
    pitch: float
    sigma: float
    decorrelation_distance: float
    seed: int

    @classmethod
    def generate(cls, n_cells: int, half_width: float, sigma: float, d_cor: float, pitch: float, seed: int) -> "ShadowMap":
        n = int(math.ceil(2 * half_width / pitch)) + 2
        rng = substream(seed, "shadow")
        fields = _exponential_fields(n, pitch, d_cor, n_cells, rng)
        # standardize each realization so every cell map has exact zero mean / sigma spread
        mean = fields.mean(axis=(1, 2), keepdims=True)
        std = fields.std(axis=(1, 2), keepdims=True)
        grid = sigma * (fields - mean) / std
        return cls(grid, -half_width - pitch, pitch, sigma, d_cor, seed)

    @classmethod
    def zeros(cls, n_cells: int, half_width: float = 1.0) -> "ShadowMap":
        return cls(np.zeros((n_cells, 2, 2)), -half_width, 2 * half_width, 0.0, 1.0, 0)

    def values(self, positions: np.ndarray) -> np.ndarray:
        """Shadowing in dB for every (position, cell); returns (n_pos, n_cells)."""
        pos = np.atleast_2d(positions)
        n = self.grid.shape[-1]
        fx = (pos[:, 0] - self.origin) / self.pitch
        fy = (pos[:, 1] - self.origin) / self.pitch
        ix = np.clip(np.floor(fx).astype(int), 0, n - 2)
        iy = np.clip(np.floor(fy).astype(int), 0, n - 2)
        wx = np.clip(fx - ix, 0.0, 1.0)
        wy = np.clip(fy - iy, 0.0, 1.0)
        g = self.grid
        v = (
            g[:, iy, ix] * (1 - wx) * (1 - wy)
            + g[:, iy, ix + 1] * wx * (1 - wy)
            + g[:, iy + 1, ix] * (1 - wx) * wy
            + g[:, iy + 1, ix + 1] * wx * wy
        )
        return v.T

    def shadow_at(self, cell_id: int, position) -> float:
        return float(self.values(np.asarray(position, dtype=float))[0, cell_id])


class FastFading:
    """Rayleigh fading per (ue, cell, beam) from a sum of Doppler-shifted sinusoids."""

    def __init__(self, n_ue: int, n_cells: int, n_beams: int, doppler_hz: float, n_osc: int, seed: int):
        shape = (n_ue, n_cells, n_beams, n_osc)
        self._omega = np.empty(shape)
        self._phase = np.empty(shape)
        for u in range(n_ue):
            rng = substream(seed, "fading", u)
            alpha = rng.uniform(0.0, 2 * np.pi, shape[1:])
            self._omega[u] = 2 * np.pi * doppler_hz * np.cos(alpha)
            self._phase[u] = rng.uniform(0.0, 2 * np.pi, shape[1:])
        self._norm = 1.0 / n_osc

    def power_linear(self, t_ms: float, ue: slice | np.ndarray = slice(None)) -> np.ndarray:
        arg = self._omega[ue] * (t_ms * 1e-3) + self._phase[ue]
        re = np.cos(arg).sum(axis=-1)
        im = np.sin(arg).sum(axis=-1)
        return (re * re + im * im) * self._norm

    def gain_db(self, t_ms: float) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.power_linear(t_ms), 1e-12))


class Channel:
    """Received power for every (ue, cell, beam), excluding UE antenna gain."""

    def __init__(self, topology: Topology, cfg: SimConfig, shadow: ShadowMap | None = None):
        self.topology = topology
        self.carrier_ghz = cfg.radio.carrier_ghz
        ch = cfg.channel
        if shadow is None:
            if ch.shadowing:
                shadow = ShadowMap.generate(
                    topology.n_cells,
                    topology.bounds_radius_m + ch.shadow_grid_pitch_m,
                    ch.shadow_sigma_db,
                    ch.shadow_decorrelation_m,
                    ch.shadow_grid_pitch_m,
                    cfg.run.seed,
                )
            else:
                shadow = ShadowMap.zeros(topology.n_cells, topology.bounds_radius_m + 10.0)
        self.shadow = shadow
        self.fading: FastFading | None = None
        if ch.fast_fading:
            speed = cfg.ue.speed_kmh / 3.6
            doppler = speed * cfg.radio.carrier_ghz * 1e9 / SPEED_OF_LIGHT
            self.fading = FastFading(
                cfg.ue.n_ue, topology.n_cells, len(topology.cells[0].beams), doppler, ch.fading_oscillators, cfg.run.seed
            )

    def geometry(self, positions: np.ndarray):
        """Distances and angles between UEs (n, 2) and cells.

        Returns ``(d3d, az_local, zenith, arrival_az)``, each (n, n_cells). ``az_local`` is
        the UE direction in the cell frame; ``arrival_az`` the direction from UE to the site.
        """
        topo = self.topology
        dx = positions[:, None, 0] - topo.cell_xy[None, :, 0]
        dy = positions[:, None, 1] - topo.cell_xy[None, :, 1]
        d2d = np.hypot(dx, dy)
        dh = topo.cell_height[None, :] - topo.rx_height_m
        d3d = np.hypot(d2d, dh)
        az = np.degrees(np.arctan2(dy, dx))
        az_local = wrap_deg(az - topo.cell_boresight[None, :])
        zenith = 90.0 + np.degrees(np.arctan2(dh, d2d))
        arrival = wrap_deg(az + 180.0)
        return d3d, az_local, zenith, arrival

    def rx_grid(self, positions: np.ndarray, t_ms: float):
        """Return ``(rx, arrival_az)``: rx is (n, n_cells, n_beams) dBm at 0 dBi UE gain."""
        topo = self.topology
        d3d, az_local, zenith, arrival = self.geometry(positions)
        gain = topo.tx_gain_grid(az_local, zenith)
        base = topo.cell_tx_power[None, :] - path_loss(d3d, self.carrier_ghz) - self.shadow.values(positions)
        rx = base[..., None] + gain
        if self.fading is not None:
            rx = rx + self.fading.gain_db(t_ms)
        return rx, arrival


def rx_power(
    topology: Topology,
    shadow: ShadowMap,
    cell_id: int,
    beam_index: int,
    ue_position,
    ue_panel_gain_dbi: float,
    time_ms: float = 0.0,
    carrier_ghz: float = 28.0,
    fading_db: float = 0.0,
) -> float:
    """Single-link received power (dBm); ``beam_index`` is 1-based."""
    pos = np.asarray(ue_position, dtype=float).reshape(1, 2)
    cell = topology.cells[cell_id]
    sx, sy = topology.sites[cell.site_index]
    dx, dy = pos[0, 0] - sx, pos[0, 1] - sy
    d2d = math.hypot(dx, dy)
    dh = cell.antenna_height_m - topology.rx_height_m
    az_local = float(wrap_deg(math.degrees(math.atan2(dy, dx)) - cell.boresight_azimuth_deg))
    zenith = 90.0 + math.degrees(math.atan2(dh, d2d))
    g = tx_gain(cell.beams[beam_index - 1], (zenith, az_local))
    pl = path_loss(math.hypot(d2d, dh), carrier_ghz)
    return cell.tx_power_dbm + g + ue_panel_gain_dbi - pl - shadow.shadow_at(cell_id, pos[0]) + fading_db
