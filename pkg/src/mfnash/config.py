"""YAML run configuration.

Layout (all sections except ``game`` are optional)::

    seed: 20240601
    game:
      horizon: 1.0          # model time units
      x0: 1.0
      coefficients:         # per unit time; scalar or list = uniform table on [0, horizon]
        a: 0.1
        ...
      terminal:             # dimensionless weights on x(T)^2 and E[x(T)]^2
        h1: 1.0
        ...
    solve:      {n_steps: 2000}
    simulate:   {n_paths: 10000, n_steps: 512, csv_paths: 20, csv_every: 1}
    nash:       {n_paths: 10000, n_steps: 512, n_batches: 20, gain_scale: 1.0}
    fbsde:      {n_paths: 10000, n_steps: 256, max_picard: 30, picard_tol: 1.0e-4,
                 theta: 0.5, antithetic: true}
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import yaml

from .model import TERMINAL_WEIGHTS, TIME_COEFFICIENTS, LqGameSpec

DEFAULTS = {
    "seed": 0,
    "solve": {"n_steps": 2000},
    "simulate": {"n_paths": 10_000, "n_steps": 512, "csv_paths": 20, "csv_every": 1},
    "nash": {"n_paths": 10_000, "n_steps": 512, "n_batches": 20, "gain_scale": 1.0},
    "fbsde": {"n_paths": 10_000, "n_steps": 256, "max_picard": 30, "picard_tol": 1e-4,
              "theta": 0.5, "antithetic": True},
}


class ConfigError(ValueError):
    """The configuration file is missing, unreadable or malformed."""


@dataclass(frozen=True)
class RunConfig:
    data: dict

    @property
    def spec(self) -> LqGameSpec:
        return spec_from_dict(self.data["game"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def section(self, name: str) -> dict:
        return dict(self.data[name])

    def override(self, section: str, **values) -> "RunConfig":
        data = copy.deepcopy(self.data)
        if section == "seed":
            data["seed"] = values["seed"]
        else:
            data[section].update({k: v for k, v in values.items() if v is not None})
        return RunConfig(data)

    def digest(self) -> str:
        """Short hash of the canonical JSON form."""
        text = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def spec_from_dict(game: dict) -> LqGameSpec:
    if not isinstance(game, dict):
        raise ConfigError("'game' must be a mapping")
    unknown = set(game) - {"horizon", "x0", "coefficients", "terminal"}
    if unknown:
        raise ConfigError(f"game: unknown keys {sorted(unknown)}")
    kwargs = {"horizon": _number(game.get("horizon", 1.0), "game.horizon"),
              "x0": _number(game.get("x0", 1.0), "game.x0")}
    coeffs = game.get("coefficients", {}) or {}
    terminal = game.get("terminal", {}) or {}
    if not isinstance(coeffs, dict) or not isinstance(terminal, dict):
        raise ConfigError("game.coefficients and game.terminal must be mappings")
    for name, value in coeffs.items():
        if name not in TIME_COEFFICIENTS:
            raise ConfigError(f"game.coefficients: unknown coefficient {name!r}")
        if isinstance(value, list):
            if not value:
                raise ConfigError(f"game.coefficients.{name}: empty table")
            kwargs[name] = [_number(v, f"game.coefficients.{name}") for v in value]
        else:
            kwargs[name] = _number(value, f"game.coefficients.{name}")
    for name, value in terminal.items():
        if name not in TERMINAL_WEIGHTS:
            raise ConfigError(f"game.terminal: unknown weight {name!r}")
        kwargs[name] = _number(value, f"game.terminal.{name}")
    try:
        return LqGameSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_dict(raw) -> RunConfig:
    if not isinstance(raw, dict) or "game" not in raw:
        raise ConfigError("configuration must be a mapping with a 'game' section")
    unknown = set(raw) - set(DEFAULTS) - {"game"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    data = copy.deepcopy(DEFAULTS)
    data["game"] = copy.deepcopy(raw["game"])
    if "seed" in raw:
        seed = raw["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be an integer in [0, 2^64)")
        data["seed"] = seed
    for name in ("solve", "simulate", "nash", "fbsde"):
        section = raw.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"'{name}' must be a mapping")
        extra = set(section) - set(DEFAULTS[name])
        if extra:
            raise ConfigError(f"{name}: unknown keys {sorted(extra)}")
        for key, value in section.items():
            kind = type(DEFAULTS[name][key])
            if kind is bool:
                if not isinstance(value, bool):
                    raise ConfigError(f"{name}.{key}: expected true/false")
            elif kind is int:
                if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                    raise ConfigError(f"{name}.{key}: expected a positive integer")
            else:
                value = _number(value, f"{name}.{key}")
            data[name][key] = value
    spec_from_dict(data["game"])
    return RunConfig(data)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw)
