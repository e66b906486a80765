"""Scenario configuration: strict YAML schema, resolution and fingerprints.

A scenario file names the network, the demand model and every numeric knob
of the simulator. Unknown keys are rejected everywhere. The fingerprint
hashes the fully resolved configuration together with the network file
contents, so a report can state exactly what produced it.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .demand import DemandSpec, Shares, calibrate_od_rates, default_od_pairs
from .network import Network, load_network
from .routing import CostWeights


class ConfigError(ValueError):
    pass


def _require_keys(section: dict, allowed: set[str], context: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {sorted(unknown)}")


def _parse_od_key(key: str) -> tuple[int, int]:
    try:
        origin, dest = key.split("-")
        return int(origin), int(dest)
    except ValueError as exc:
        raise ConfigError(f"bad O-D key {key!r}; expected 'origin-dest'") from exc


@dataclass(frozen=True)
class DemandConfig:
    shares: Shares
    window_flexibility: float
    scale: float
    seats: int
    od_mode: str                                  # "calibrated" | "explicit"
    explicit_rates: dict[tuple[int, int], float]  # hourly, explicit mode
    calibration_fixed_daily: dict[tuple[int, int], float]

    @staticmethod
    def from_mapping(section: dict) -> "DemandConfig":
        _require_keys(section, {
            "shares", "window_flexibility", "scale", "seats",
            "od_rates", "calibration_fixed_daily",
        }, "demand")
        shares_raw = section.get("shares", {})
        _require_keys(shares_raw, {"rider", "rideshare_driver", "regular_driver"},
                      "demand.shares")
        shares = Shares(
            rider=float(shares_raw.get("rider", 0.0)),
            rideshare_driver=float(shares_raw.get("rideshare_driver", 0.0)),
            regular_driver=float(shares_raw.get("regular_driver", 1.0)),
        )
        od_rates = section.get("od_rates", "calibrated")
        if od_rates == "calibrated":
            mode, explicit = "calibrated", {}
        elif isinstance(od_rates, dict):
            mode = "explicit"
            explicit = {_parse_od_key(k): float(v) for k, v in od_rates.items()}
        else:
            raise ConfigError("demand.od_rates must be 'calibrated' or a map")
        fixed_raw = section.get("calibration_fixed_daily", {"0-2": 26660.0})
        fixed = {_parse_od_key(k): float(v) for k, v in fixed_raw.items()}
        return DemandConfig(
            shares=shares,
            window_flexibility=float(section.get("window_flexibility", 0.25)),
            scale=float(section.get("scale", 0.1)),
            seats=int(section.get("seats", 4)),
            od_mode=mode,
            explicit_rates=explicit,
            calibration_fixed_daily=fixed,
        )

    def to_mapping(self) -> dict:
        return {
            "shares": {
                "rider": self.shares.rider,
                "rideshare_driver": self.shares.rideshare_driver,
                "regular_driver": self.shares.regular_driver,
            },
            "window_flexibility": self.window_flexibility,
            "scale": self.scale,
            "seats": self.seats,
            "od_rates": ("calibrated" if self.od_mode == "calibrated" else
                         {f"{o}-{d}": r for (o, d), r in sorted(self.explicit_rates.items())}),
            "calibration_fixed_daily": {
                f"{o}-{d}": v for (o, d), v in sorted(self.calibration_fixed_daily.items())
            },
        }


_TOP_KEYS = {
    "network", "horizon", "seed", "replications", "weights", "bpr", "dt",
    "penalty", "flow_window", "unused_capacity", "validation_error_threshold",
    "output_dir", "demand", "levels",
}


@dataclass(frozen=True)
class ScenarioConfig:
    network_path: Path
    horizon: float
    seed: int
    replications: int
    weights: CostWeights
    bpr_alpha: float
    bpr_beta: float
    dt: float
    penalty: Optional[float]
    flow_window: float
    unused_capacity: float
    validation_error_threshold: float
    output_dir: Path
    demand_config: DemandConfig
    levels: tuple[float, ...] = (1.0, 0.75, 0.5, 0.25)

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not 0.0 <= self.unused_capacity <= 1.0:
            raise ConfigError("unused_capacity must lie in [0, 1]")
        if self.flow_window <= 0:
            raise ConfigError("flow_window must be positive")
        if self.validation_error_threshold < 0:
            raise ConfigError("validation_error_threshold must be >= 0")
        for level in self.levels:
            if not 0.0 <= level <= 1.0:
                raise ConfigError(f"sweep level {level} outside [0, 1]")

    # ------------------------------------------------------------ resolution

    def make_network(self) -> Network:
        return load_network(self.network_path)

    def demand_spec(self, network: Network) -> DemandSpec:
        if self.demand_config.od_mode == "explicit":
            rates = dict(self.demand_config.explicit_rates)
        else:
            targets = {l.id: l.observed_daily_flow for l in network.links}
            pairs = default_od_pairs(network)
            fixed = {od: daily
                     for od, daily in self.demand_config.calibration_fixed_daily.items()
                     if od in pairs}
            rates = calibrate_od_rates(network, targets, od_pairs=pairs,
                                       fixed_daily=fixed)
        return DemandSpec(
            od_rates=rates,
            shares=self.demand_config.shares,
            window_flexibility=self.demand_config.window_flexibility,
            horizon=self.horizon,
            scale=self.demand_config.scale,
            seats=self.demand_config.seats,
        )

    def with_shares(self, rider: float, rideshare: float, regular: float) -> "ScenarioConfig":
        new_demand = dataclasses.replace(
            self.demand_config,
            shares=Shares(rider=rider, rideshare_driver=rideshare,
                          regular_driver=regular),
        )
        return dataclasses.replace(self, demand_config=new_demand)

    def with_updates(self, **kwargs) -> "ScenarioConfig":
        return dataclasses.replace(self, **kwargs)

    # ----------------------------------------------------------- fingerprint

    def resolved_mapping(self) -> dict:
        return {
            "network_sha256": hashlib.sha256(
                Path(self.network_path).read_bytes()
            ).hexdigest(),
            "horizon": self.horizon,
            "seed": self.seed,
            "replications": self.replications,
            "weights": {"toll": self.weights.toll, "time": self.weights.time},
            "bpr": {"alpha": self.bpr_alpha, "beta": self.bpr_beta},
            "dt": self.dt,
            "penalty": self.penalty,
            "flow_window": self.flow_window,
            "unused_capacity": self.unused_capacity,
            "validation_error_threshold": self.validation_error_threshold,
            "demand": self.demand_config.to_mapping(),
            "levels": list(self.levels),
        }

    def fingerprint(self) -> str:
        payload = json.dumps(self.resolved_mapping(), sort_keys=True,
                             separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def bundled_data_path(name: str) -> Path:
    return Path(str(resources.files("ridesim") / "data" / name))


def _resolve_network_path(raw: str, base_dir: Path) -> Path:
    candidate = (base_dir / raw).resolve() if not Path(raw).is_absolute() else Path(raw)
    if candidate.exists():
        return candidate
    bundled = bundled_data_path(raw if raw.endswith(".yaml") else f"{raw}.yaml")
    if bundled.exists():
        return bundled
    raise ConfigError(f"network file not found: {raw}")


def load_config(path: str | Path, overrides: Optional[dict] = None) -> ScenarioConfig:
    """Parse and validate a scenario file; ``overrides`` win over file values."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _require_keys(raw, _TOP_KEYS, str(path))
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    _require_keys(merged, _TOP_KEYS, str(path))

    weights_raw = merged.get("weights", {})
    _require_keys(weights_raw, {"toll", "time"}, "weights")
    bpr_raw = merged.get("bpr", {})
    _require_keys(bpr_raw, {"alpha", "beta"}, "bpr")

    penalty = merged.get("penalty")
    levels = merged.get("levels", [1.0, 0.75, 0.5, 0.25])
    if not isinstance(levels, (list, tuple)):
        raise ConfigError("levels must be a list")
    try:
        return ScenarioConfig(
            network_path=_resolve_network_path(
                str(merged.get("network", "la_testbed.yaml")), path.parent
            ),
            horizon=float(merged.get("horizon", 24.0)),
            seed=int(merged.get("seed", 0)),
            replications=int(merged.get("replications", 20)),
            weights=CostWeights(
                toll=float(weights_raw.get("toll", 1.0)),
                time=float(weights_raw.get("time", 1.0)),
            ),
            bpr_alpha=float(bpr_raw.get("alpha", 0.15)),
            bpr_beta=float(bpr_raw.get("beta", 4.0)),
            dt=float(merged.get("dt", 0.05)),
            penalty=None if penalty is None else float(penalty),
            flow_window=float(merged.get("flow_window", 0.25)),
            unused_capacity=float(merged.get("unused_capacity", 1.0)),
            validation_error_threshold=float(
                merged.get("validation_error_threshold", 0.01)
            ),
            output_dir=Path(merged.get("output_dir", "out")),
            demand_config=DemandConfig.from_mapping(merged.get("demand", {})),
            levels=tuple(float(x) for x in levels),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc
