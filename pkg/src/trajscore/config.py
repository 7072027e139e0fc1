"""Analysis configuration: every tunable constant lives here."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ConfigError(Exception):
    pass


SCENARIOS = ("urban", "highway")


@dataclass(frozen=True)
class Config:
    # relevance weights and criticality
    kappa: float = 1.0
    gamma_i: float = 5.0
    gamma_a: float = 0.1
    gamma_cap: float = 10.0
    # relation indicators
    scenario: str = "urban"
    beta_min_urban_deg: float = 20.0
    beta_min_highway_deg: float = 2.0
    gating_radius: float = 75.0
    horizon: float = 5.0
    thw_max: float = 5.0
    ttc_max: float = 5.0
    drac_min: float = 0.5
    follow_lateral_tol: float = 1.0
    follow_heading_max_deg: float = 20.0
    standing_speed: float = 0.5
    moving_on_speed: float = 1.0
    wp_min_duration: float = 1.0
    # geometry
    path_step: float = 0.5
    cell_size: float = 0.5
    # context detections
    behavior_eps: float = 0.7
    behavior_small_cluster_share: float = 0.10
    behavior_sample_hz: float = 1.0
    trajectory_step: float = 1.0
    direction_min_speed: float = 1.0
    # reporting
    heatmap_resolution: float = 2.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.kappa < 1:
            raise ConfigError("kappa must be >= 1")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and (not math.isfinite(v) or v < 0):
                raise ConfigError(f"{f.name} must be a finite non-negative number")
        for name in ("path_step", "cell_size", "behavior_eps", "gating_radius", "heatmap_resolution",
                     "trajectory_step", "behavior_sample_hz"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def beta_min(self) -> float:
        deg = self.beta_min_urban_deg if self.scenario == "urban" else self.beta_min_highway_deg
        return math.radians(deg)

    def caps(self) -> dict[str, float]:
        """Score cap per detection type; inf where the type is uncapped."""
        return {
            "thw": 2.0, "dmttcp": 4.0, "ttc": 2.0 * self.kappa, "drac": 2.0 * self.kappa,
            "wp": 7.75, "lon_accel": 10.0, "lat_accel": 20.0, "sideslip": 8.725,
            "yaw_rate": 3.141, "velocity": 10.0, "trajectory": 10.0, "area_usage": 5.0,
            "driving_direction": 4.0, "driving_behavior": math.inf,
        }

    def with_overrides(self, **kw) -> Config:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def config_from_dict(data: dict) -> Config:
    known = {f.name: f for f in fields(Config)}
    flat = dict(data)
    # allow [scoring] / [relations] style tables by flattening one level
    for key in list(flat):
        if isinstance(flat[key], dict):
            flat.update(flat.pop(key))
    unknown = sorted(set(flat) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kw = {}
    for k, v in flat.items():
        if k == "scenario":
            kw[k] = str(v)
            continue
        try:
            kw[k] = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {k!r} must be numeric") from None
    return Config(**kw)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return config_from_dict(data)
