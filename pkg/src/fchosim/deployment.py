"""Hexagonal 7-site / 21-cell deployment with a 12-beam grid per cell."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np

from .config import ConfigError, SimConfig

N_BEAMS = 12
N_OUTER = 8
ELEMENT_GAIN_DBI = 8.0
# gain floor relative to beam peak
SIDELOBE_FLOOR_DB = 25.0


@dataclass(frozen=True)
class Beam:
    index: int  # 1..12
    elevation_deg: float
    azimuth_deg: float  # relative to the cell boresight
    outer: bool
    peak_gain_dbi: float
    beamwidth_az_deg: float
    beamwidth_el_deg: float


@dataclass(frozen=True)
class Cell:
    id: int
    site_index: int
    boresight_azimuth_deg: float
    tx_power_dbm: float
    antenna_height_m: float
    beams: tuple[Beam, ...]


def _panel_beam(n_elements: int, bw_az: float, bw_el: float) -> tuple[float, float, float]:
    return 10.0 * math.log10(n_elements) + ELEMENT_GAIN_DBI, bw_az, bw_el


OUTER_PANEL = _panel_beam(16 * 8, 6.4, 9.2)
INNER_PANEL = _panel_beam(8 * 4, 12.8, 18.4)


def beam_direction(b: int) -> tuple[float, float]:
    """(elevation, azimuth) in degrees of beam ``b`` (1-based); azimuth is cell-relative."""
    if not 1 <= b <= N_BEAMS:
        raise ValueError(f"beam index must be in 1..{N_BEAMS}, got {b}")
    if b <= N_OUTER:
        return 90.0, -52.5 + 15.0 * (b - 1)
    return 97.0, -45.0 + 30.0 * (b - 9)


def make_beam(b: int) -> Beam:
    theta, phi = beam_direction(b)
    outer = b <= N_OUTER
    g, bw_az, bw_el = OUTER_PANEL if outer else INNER_PANEL
    return Beam(b, theta, phi, outer, g, bw_az, bw_el)


def wrap_deg(a):
    """Wrap angle(s) to [-180, 180)."""
    return (np.asarray(a) + 180.0) % 360.0 - 180.0


def tx_gain(beam: Beam, direction: tuple[float, float]) -> float:
    """Beamforming gain (dBi) of ``beam`` toward ``(elevation, azimuth)`` in the cell frame."""
    theta, phi = direction
    d_az = float(wrap_deg(phi - beam.azimuth_deg))
    d_el = theta - beam.elevation_deg
    loss = 12.0 * ((d_az / beam.beamwidth_az_deg) ** 2 + (d_el / beam.beamwidth_el_deg) ** 2)
    return beam.peak_gain_dbi - min(loss, SIDELOBE_FLOOR_DB)


@dataclass(frozen=True)
class Topology:
    sites: tuple[tuple[float, float], ...]
    cells: tuple[Cell, ...]
    inter_site_distance: float
    rx_height_m: float
    drop_radius_m: float
    bounds_radius_m: float

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    # Vectorized views used by the channel; computed once.

    @cached_property
    def cell_xy(self) -> np.ndarray:
        return np.array([self.sites[c.site_index] for c in self.cells], dtype=float)

    @cached_property
    def cell_boresight(self) -> np.ndarray:
        return np.array([c.boresight_azimuth_deg for c in self.cells])

    @cached_property
    def cell_tx_power(self) -> np.ndarray:
        return np.array([c.tx_power_dbm for c in self.cells])

    @cached_property
    def cell_height(self) -> np.ndarray:
        return np.array([c.antenna_height_m for c in self.cells])

    @cached_property
    def beam_table(self) -> dict[str, np.ndarray]:
        beams = self.cells[0].beams
        return {
            "elevation": np.array([b.elevation_deg for b in beams]),
            "azimuth": np.array([b.azimuth_deg for b in beams]),
            "peak": np.array([b.peak_gain_dbi for b in beams]),
            "bw_az": np.array([b.beamwidth_az_deg for b in beams]),
            "bw_el": np.array([b.beamwidth_el_deg for b in beams]),
        }

    def tx_gain_grid(self, az_local: np.ndarray, zenith: np.ndarray) -> np.ndarray:
        """Gains for every beam; inputs shaped (..., n_cells), output (..., n_cells, 12)."""
        bt = self.beam_table
        d_az = wrap_deg(az_local[..., None] - bt["azimuth"])
        d_el = zenith[..., None] - bt["elevation"]
        loss = 12.0 * ((d_az / bt["bw_az"]) ** 2 + (d_el / bt["bw_el"]) ** 2)
        return bt["peak"] - np.minimum(loss, SIDELOBE_FLOOR_DB)

    def to_dict(self) -> dict:
        return {
            "inter_site_distance": self.inter_site_distance,
            "n_cells": self.n_cells,
            "drop_radius_m": self.drop_radius_m,
            "bounds_radius_m": self.bounds_radius_m,
            "sites": [list(s) for s in self.sites],
            "cells": [asdict(c) for c in self.cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def hexagon_contains(points: np.ndarray, radius: float) -> np.ndarray:
    """Inside test for the regular hexagon with vertices at 0, 60, ..., 300 deg."""
    pts = np.atleast_2d(points)
    normals = np.deg2rad(30.0 + 60.0 * np.arange(6))
    proj = pts[:, 0:1] * np.cos(normals) + pts[:, 1:2] * np.sin(normals)
    return np.all(proj <= radius * math.cos(math.pi / 6) + 1e-9, axis=1)


def hexagon_edge_normals() -> np.ndarray:
    a = np.deg2rad(30.0 + 60.0 * np.arange(6))
    return np.stack([np.cos(a), np.sin(a)], axis=1)


def build_topology(cfg: SimConfig) -> Topology:
    d = cfg.deployment
    isd = d.inter_site_distance_m
    if isd <= 0:
        raise ConfigError("inter-site distance must be positive")
    if d.n_sites not in (1, 7):
        raise ConfigError(f"unsupported site count {d.n_sites}")
    sites = [(0.0, 0.0)]
    if d.n_sites == 7:
        for k in range(6):
            a = math.radians(60.0 * k)
            # round away float dust so serialization is stable
            sites.append((round(isd * math.cos(a), 9), round(isd * math.sin(a), 9)))
    beams = tuple(make_beam(b) for b in range(1, N_BEAMS + 1))
    cells = []
    for s in range(len(sites)):
        for az in d.sector_boresights_deg:
            cells.append(
                Cell(
                    id=len(cells),
                    site_index=s,
                    boresight_azimuth_deg=float(az),
                    tx_power_dbm=cfg.radio.tx_power_dbm,
                    antenna_height_m=cfg.radio.tx_height_m,
                    beams=beams,
                )
            )
    drop_r = d.drop_radius_isd * isd
    return Topology(
        sites=tuple(sites),
        cells=tuple(cells),
        inter_site_distance=isd,
        rx_height_m=cfg.radio.rx_height_m,
        drop_radius_m=drop_r,
        bounds_radius_m=drop_r + d.bounds_margin_m,
    )
