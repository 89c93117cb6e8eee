"""YAML configuration files, ablation grids and run manifests."""
from __future__ import annotations

import hashlib
import itertools
import json
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import yaml

from .synthgen import GenConfig
from .trainer import TrainConfig

__all__ = [
    "ConfigError",
    "load_mapping",
    "load_gen_config",
    "load_train_config",
    "load_grid",
    "config_hash",
    "RunManifest",
    "MANIFEST_FILE",
]

MANIFEST_FILE = "run.json"


class ConfigError(ValueError):
    pass


def load_mapping(path) -> dict:
    """Parse a YAML file that must hold a mapping (an empty file is ``{}``)."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level, got {type(data).__name__}")
    return data


def _build(cls, data: dict, seed: Optional[int], source: str):
    unknown = sorted(set(data) - cls.field_names())
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(map(repr, unknown))}")
    data = dict(data)
    if seed is not None:
        data["seed"] = seed
    if "seed" not in data:
        raise ConfigError(f"{source}: 'seed' is required")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_gen_config(path, seed: Optional[int] = None) -> GenConfig:
    return _build(GenConfig, load_mapping(path), seed, str(path))


def load_train_config(path, seed: Optional[int] = None) -> TrainConfig:
    return _build(TrainConfig, load_mapping(path), seed, str(path))


def load_grid(path, base: TrainConfig) -> list[dict]:
    """Read an ablation grid and validate every point against ``base``.

    The file holds either ``points:`` (a list of override mappings) or
    ``product:`` (a mapping of key to value list, expanded as a cartesian
    product in key order).
    """
    data = load_mapping(path)
    keys = set(data)
    if keys not in ({"points"}, {"product"}):
        raise ConfigError(f"{path}: grid must have exactly one of 'points' or 'product', got {sorted(keys)}")
    if "points" in data:
        points = data["points"]
        if not isinstance(points, list) or not all(isinstance(p, dict) for p in points):
            raise ConfigError(f"{path}: 'points' must be a list of mappings")
    else:
        prod = data["product"]
        if not isinstance(prod, dict) or not all(isinstance(v, list) and v for v in prod.values()):
            raise ConfigError(f"{path}: 'product' must map keys to non-empty lists")
        names = list(prod)
        points = [dict(zip(names, combo)) for combo in itertools.product(*prod.values())]
    if not points:
        raise ConfigError(f"{path}: grid is empty")
    for i, p in enumerate(points):
        try:
            base.with_overrides(**p)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: grid point {i}: {exc}") from None
    return points


def config_hash(cfg) -> str:
    """sha256 of the canonical JSON form of a config."""
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: Optional[int]
    config: dict
    artifacts: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    status: str = "running"
    version: str = ""

    def write(self, run_dir) -> Path:
        from . import __version__

        self.version = self.version or __version__
        path = Path(run_dir) / MANIFEST_FILE
        body = {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "started": self.started,
            "finished": self.finished,
            "status": self.status,
            "version": self.version,
            "python": platform.python_version(),
        }
        path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
        return path

    def finish(self, run_dir, status: str = "ok") -> Path:
        missing = [k for k, v in self.artifacts.items() if not (Path(run_dir) / v).exists()]
        if status == "ok" and missing:
            status = "incomplete"
        self.status = status
        self.finished = _now()
        self.write(run_dir)
        if missing:
            raise FileNotFoundError(f"artifacts not written: {missing}")
        return Path(run_dir) / MANIFEST_FILE

    @staticmethod
    def read(run_dir) -> dict:
        return json.loads((Path(run_dir) / MANIFEST_FILE).read_text())
