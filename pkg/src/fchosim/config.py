"""Simulation configuration.

Every tunable of a run lives in :class:`SimConfig`, grouped into sections so
that dotted overrides such as ``handover.o_exec=3`` address a single field.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


class HoMode(str, Enum):
    CHO = "cho"
    FCHO = "fcho"


class UeScheme(str, Enum):
    ISO = "iso"
    MPUE_A3 = "mpue-a3"
    MPUE_A1 = "mpue-a1"


@dataclass
class RadioConfig:
    carrier_ghz: float = 28.0
    bandwidth_mhz: float = 100.0
    noise_figure_db: float = 9.0
    tx_power_dbm: float = 40.0
    tx_height_m: float = 10.0
    rx_height_m: float = 1.5


@dataclass
class DeploymentConfig:
    inter_site_distance_m: float = 200.0
    n_sites: int = 7
    cells_per_site: int = 3
    # sector orientation within a site; 120 deg apart
    sector_boresights_deg: tuple[float, ...] = (30.0, 150.0, 270.0)
    # drop region = hexagon of this circumradius (in ISDs)
    drop_radius_isd: float = 1.5
    bounds_margin_m: float = 50.0


@dataclass
class ChannelConfig:
    shadow_sigma_db: float = 4.0
    shadow_decorrelation_m: float = 25.0
    shadow_grid_pitch_m: float = 5.0
    shadowing: bool = True
    fast_fading: bool = False
    fading_oscillators: int = 8


@dataclass
class UeConfig:
    n_ue: int = 420
    speed_kmh: float = 60.0
    scheme: UeScheme = UeScheme.ISO
    panel_peak_gain_dbi: float = 5.0
    panel_offsets_deg: tuple[float, ...] = (0.0, 120.0, -120.0)
    panel_floor_dbi: float = -10.0
    l3_coefficient: float = 0.5


@dataclass
class HandoverConfig:
    mode: HoMode = HoMode.CHO
    o_prep: float = 10.0
    o_exec: float = 3.0
    o_rel: float = 13.0
    o_rep: float = 3.0
    window_ms: int = 80
    max_prepared: int = 4
    prep_latency_ms: int = 40
    access_ms: int = 40

    @property
    def o_hys(self) -> float:
        return self.o_rel - self.o_prep


@dataclass
class LinkConfig:
    gamma_out_db: float = -8.0
    gamma_in_db: float = -6.0
    t_rlf_ms: int = 1000
    t_hof_ms: int = 200
    t_reest_ms: int = 200
    scheduled_beams: int = 4


@dataclass
class KpiConfig:
    t_fh_ms: int = 1000
    warmup_ms: int = 2000


@dataclass
class RunConfig:
    duration_s: float = 60.0
    dt_ms: int = 10
    ssb_period_ms: int = 20
    seed: int = 1


DESK_N_UE = 42


@dataclass
class SimConfig:
    radio: RadioConfig = field(default_factory=RadioConfig)
    deployment: DeploymentConfig = field(default_factory=DeploymentConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    ue: UeConfig = field(default_factory=UeConfig)
    handover: HandoverConfig = field(default_factory=HandoverConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    kpi: KpiConfig = field(default_factory=KpiConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @classmethod
    def desk(cls) -> "SimConfig":
        """Desk-scale variant: one tenth of the UEs, otherwise the defaults."""
        cfg = cls()
        cfg.ue.n_ue = DESK_N_UE
        return cfg

    @property
    def duration_ms(self) -> int:
        return int(round(self.run.duration_s * 1000))

    @property
    def n_ticks(self) -> int:
        return self.duration_ms // self.run.dt_ms

    @property
    def window_len(self) -> int:
        """Monitoring window in SSB instants."""
        return self.handover.window_ms // self.run.ssb_period_ms

    def validate(self) -> "SimConfig":
        r, h, d = self.run, self.handover, self.deployment
        try:
            h.mode = HoMode(h.mode)
            self.ue.scheme = UeScheme(self.ue.scheme)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if r.dt_ms <= 0 or r.ssb_period_ms <= 0:
            raise ConfigError("time step and SSB period must be positive")
        if r.ssb_period_ms % r.dt_ms:
            raise ConfigError("SSB period must be an integer multiple of the time step")
        if h.window_ms <= 0 or h.window_ms % r.ssb_period_ms:
            raise ConfigError("monitoring window must be a positive multiple of the SSB period")
        if not h.o_hys > 0:
            raise ConfigError(
                f"release offset must exceed preparation offset (o_rel={h.o_rel}, o_prep={h.o_prep})"
            )
        if h.max_prepared < 1:
            raise ConfigError("max_prepared must be >= 1")
        if d.inter_site_distance_m <= 0:
            raise ConfigError("inter-site distance must be positive")
        if d.n_sites not in (1, 7):
            raise ConfigError("only 1-site and 7-site hexagonal layouts are supported")
        if len(d.sector_boresights_deg) != d.cells_per_site:
            raise ConfigError("need one sector boresight per cell of a site")
        if self.ue.n_ue < 1:
            raise ConfigError("n_ue must be >= 1")
        if self.ue.speed_kmh < 0:
            raise ConfigError("speed must be non-negative")
        if self.duration_ms <= 0 or self.duration_ms % r.dt_ms:
            raise ConfigError("duration must be a positive multiple of the time step")
        if not 0 < self.ue.l3_coefficient <= 1:
            raise ConfigError("L3 coefficient must lie in (0, 1]")
        if self.link.gamma_in_db < self.link.gamma_out_db:
            raise ConfigError("gamma_in must not be below gamma_out")
        if self.link.scheduled_beams < 1:
            raise ConfigError("scheduled_beams must be >= 1")
        if self.kpi.warmup_ms < 0 or self.kpi.warmup_ms >= self.duration_ms:
            raise ConfigError("warm-up must be shorter than the run")
        return self

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        def conv(v):
            if isinstance(v, Enum):
                return v.value
            if isinstance(v, tuple):
                return list(v)
            return v

        return {
            f.name: {k: conv(v) for k, v in dataclasses.asdict(getattr(self, f.name)).items()}
            for f in dataclasses.fields(self)
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        """Short digest of the configuration, seed excluded."""
        d = self.to_dict()
        d["run"] = {k: v for k, v in d["run"].items() if k != "seed"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimConfig":
        cfg = cls()
        for section, values in data.items():
            if not isinstance(values, dict):
                raise ConfigError(f"section {section!r} must be an object")
            for key, value in values.items():
                cfg.set(f"{section}.{key}", value)
        return cfg.validate()

    def set(self, dotted: str, value: Any) -> None:
        """Assign one field by dotted key, coercing to the declared type."""
        try:
            section, key = dotted.split(".")
        except ValueError:
            raise ConfigError(f"override key must look like section.field, got {dotted!r}") from None
        sec = getattr(self, section, None)
        if sec is None or not dataclasses.is_dataclass(sec):
            raise ConfigError(f"unknown config section {section!r}")
        fields_ = {f.name: f for f in dataclasses.fields(sec)}
        if key not in fields_:
            raise ConfigError(f"unknown config key {dotted!r}")
        current = getattr(sec, key)
        setattr(sec, key, _coerce(dotted, current, value))


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, current: Any, value: Any) -> Any:
    try:
        if isinstance(current, Enum):
            return type(current)(str(value).lower())
        if isinstance(current, bool):
            if isinstance(value, bool):
                return value
            s = str(value).lower()
            if s in _TRUE:
                return True
            if s in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(current, int):
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple):
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None
    return value


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> SimConfig:
    """Read a JSON config file (optional) and apply dotted-key overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            data = json.loads(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: invalid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be an object")
        if isinstance(data.get("config"), dict):  # a run's config-echo.json
            data = data["config"]
    cfg = SimConfig.from_dict(data)
    for k, v in (overrides or {}).items():
        cfg.set(k, v)
    return cfg.validate()
