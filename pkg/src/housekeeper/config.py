"""Runtime configuration.

A config file is TOML (or JSON, picked by extension) with a flat [housekeeper]
table; every field has a sensible default so `Config()` alone is enough for
tests and the demo.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):  # pragma: no cover
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    scene_path: Optional[str] = None
    provider: str = "mock"                    # "mock" | "live"
    rule_paths: list = field(default_factory=list)
    cache_path: Optional[str] = None
    tau: float = 0.80
    max_retries: int = 3
    step_budget: int = 1000
    simulate_latency: bool = False
    host: str = "127.0.0.1"
    port: int = 8000
    user_name: str = "Eason"

    def __post_init__(self) -> None:
        if self.provider not in ("mock", "live"):
            raise ConfigError(f"provider must be 'mock' or 'live', got {self.provider!r}")
        if not (0.0 < self.tau <= 1.0):
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.step_budget <= 0:
            raise ConfigError("step_budget must be positive")


def load_config(path) -> Config:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".json":
        data = json.loads(raw)
    else:
        data = tomllib.loads(raw.decode("utf-8"))
    table = data.get("housekeeper", data)
    if not isinstance(table, dict):
        raise ConfigError("config root must be a table")
    known = {f.name for f in fields(Config)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = Config(**table)
    # paths in the file are relative to the file itself
    base = path.parent
    if cfg.scene_path is not None:
        cfg.scene_path = str((base / cfg.scene_path).resolve())
    if cfg.cache_path is not None:
        cfg.cache_path = str((base / cfg.cache_path).resolve())
    cfg.rule_paths = [str((base / p).resolve()) for p in cfg.rule_paths]
    return cfg
