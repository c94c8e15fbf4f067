"""Training and evaluation configuration files (TOML or JSON).

A config file has up to five tables, each optional::

    [sac]       SacConfig fields
    [env]       EnvConfig scalar fields
    [vehicle]   VehicleSpec fields
    [features]  FeatureConfig fields
    [train]     scenarios = ["roundabout_16m", "path/to/file.json", ...]
                routes = "all" | ["roundabout_16m:0", ...]
                threads = 1
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .envmdp import EnvConfig
from .features import FeatureConfig
from .sacd import SacConfig
from .scenario import Scenario, default_scenarios, load_scenario
from .vehicle import VehicleSpec

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

TRAIN_SCENARIOS = ("roundabout_16m", "roundabout_32m", "roundabout_50m")
TEST_SCENARIOS = ("roundabout_20m", "roundabout_40m")
SECTIONS = ("sac", "env", "vehicle", "features", "train")
TRAIN_KEYS = ("scenarios", "routes", "threads")


class ConfigError(ValueError):
    pass


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text()
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}; expected {list(SECTIONS)}")
    return raw


def merge(base: dict, override: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for k, v in override.items():
        if isinstance(v, dict):
            out.setdefault(k, {}).update(v)
        else:
            out[k] = v
    return out


def _build(cls, values: dict, section: str):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"[{section}] unknown fields {sorted(unknown)}")
    try:
        if cls is FeatureConfig:
            return FeatureConfig.from_dict(values)
        if cls is SacConfig:
            return SacConfig.from_dict(values)
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def scenario_by_name_or_path(ref: str, spacing: float | None = None) -> Scenario:
    family = default_scenarios() if spacing is None else default_scenarios(spacing)
    if ref in family:
        return family[ref]
    p = Path(ref)
    if p.exists():
        return load_scenario(p)
    raise FileNotFoundError(f"scenario not found: {ref} (not a built-in name {sorted(family)} or a file)")


@dataclass
class TrainSetup:
    sac: SacConfig
    env: EnvConfig
    scenarios: list
    routes: list          # (scenario, route_id) pairs
    threads: int = 1

    def resolved(self) -> dict:
        return {"sac": self.sac.to_dict(), "env": self.env.to_dict(),
                "train": {"scenarios": [s.name for s in self.scenarios],
                          "routes": [f"{s.name}:{r}" for s, r in self.routes], "threads": self.threads}}


def resolve(raw: dict) -> TrainSetup:
    env_vals = dict(raw.get("env", {}))
    for k in ("vehicle", "features"):
        if k in env_vals:
            raise ConfigError(f"[env] put {k} settings in their own [{k}] table")
    vehicle = _build(VehicleSpec, raw.get("vehicle", {}), "vehicle")
    feats = _build(FeatureConfig, raw.get("features", {}), "features")
    env = _build(EnvConfig, env_vals, "env")
    env = replace(env, vehicle=vehicle, features=feats)
    sac = _build(SacConfig, raw.get("sac", {}), "sac")
    tr = raw.get("train", {})
    unknown = set(tr) - set(TRAIN_KEYS)
    if unknown:
        raise ConfigError(f"[train] unknown fields {sorted(unknown)}")
    names = tr.get("scenarios", list(TRAIN_SCENARIOS))
    scenarios = [scenario_by_name_or_path(n) for n in names]
    by_name = {s.name: s for s in scenarios}
    spec = tr.get("routes", "all")
    routes = []
    if spec == "all":
        routes = [(s, r) for s in scenarios for r in range(len(s.routes))]
    else:
        for item in spec:
            name, _, rid = str(item).rpartition(":")
            if name not in by_name or not rid.isdigit() or int(rid) >= len(by_name[name].routes):
                raise ConfigError(f"[train] bad route reference {item!r}")
            routes.append((by_name[name], int(rid)))
    if not routes:
        raise ConfigError("[train] no training routes selected")
    return TrainSetup(sac, env, scenarios, routes, int(tr.get("threads", 1)))


def load_train_setup(path=None, overrides: dict | None = None) -> TrainSetup:
    raw = read_config_file(path) if path is not None else {}
    return resolve(merge(raw, overrides or {}))
