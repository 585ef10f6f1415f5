"""Experiment configuration: flat INI-style files with one [experiment]
section, schema-validated with unknown keys rejected."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

PROTOCOLS = ("measured", "measurement_free")
COOLING_MODES = ("window", "always", "off")
STORE_MODES = ("auto", "full", "reduced", "scalar")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "measured"
    gamma_h: float = 1e-3
    Gamma_c: float = 3.0
    n_c: float = 0.0
    rounds: int = 5
    n_traj: int = 100
    master_seed: int = 1
    n_sub: int = 20
    oracle: bool = False
    cooling: str = "window"
    store: str = "auto"
    out: str = "results"

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        for name in ("gamma_h", "Gamma_c", "n_c"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v < 0 or v != v:
                raise ConfigError(f"{name} must be a non-negative number, got {v!r}")
        for name in ("rounds", "n_traj", "n_sub"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError(f"master_seed must be a non-negative integer, got {self.master_seed!r}")
        if self.cooling not in COOLING_MODES:
            raise ConfigError(f"cooling must be one of {COOLING_MODES}, got {self.cooling!r}")
        if self.store not in STORE_MODES:
            raise ConfigError(f"store must be one of {STORE_MODES}, got {self.store!r}")

    def resolved_store(self, n_steps: int) -> tuple[str, bool]:
        """Concrete accumulator settings (store mode, per-step matrices) for
        the `auto` policy, bounded by memory growth with round count."""
        if self.store != "auto":
            return self.store, True
        cells = self.rounds * n_steps
        if cells <= 2048:
            return "full", True
        if cells <= 32768:
            return "reduced", True
        return "scalar", True


_BOOL_STATES = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate a config file; `overrides` replaces single keys
    (used for CLI flags)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # physics parameters are case-sensitive
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    sections = parser.sections()
    if sections != ["experiment"]:
        raise ConfigError(f"expected exactly one [experiment] section, found {sections}")

    known = {f.name: f.type for f in fields(ExperimentConfig)}
    values: dict = {}
    for key, raw in parser.items("experiment"):
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in {path}")
        values[key] = _convert(key, raw)
    if overrides:
        for key, val in overrides.items():
            if key not in known:
                raise ConfigError(f"unknown override {key!r}")
            values[key] = val
    try:
        return ExperimentConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in ("rounds", "n_traj", "master_seed", "n_sub"):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from exc
    if key in ("gamma_h", "Gamma_c", "n_c"):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from exc
    if key == "oracle":
        if raw.lower() not in _BOOL_STATES:
            raise ConfigError(f"oracle must be a boolean, got {raw!r}")
        return _BOOL_STATES[raw.lower()]
    return raw
