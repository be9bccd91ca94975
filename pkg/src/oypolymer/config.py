"""Flat sectioned key-value config files for the experiment runner.

Plain INI sections ([experiment], [grid], [model], [sizes], [truncation],
[output]) with typed, defaulted keys; no nesting.  Validation errors name the
offending section.key.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigError

EXPERIMENTS = (
    "burke", "lpp-burke", "stationary-ratio", "comparison", "busemann",
    "busemann-dist", "free-energy", "restricted-free-energy", "shape",
    "zero-temp", "sample-paths", "tightness", "refine",
)


@dataclass
class ExperimentConfig:
    """Parsed experiment parameters; unspecified keys carry defaults."""

    name: str
    seed: int = 12345
    workers: int = 1
    dt: float = 2.0 ** -8
    lam: float = 1.0
    theta: float | None = None
    beta_list: tuple = (4.0, 16.0, 64.0)
    s_vel: float = 0.5
    t_vel: float = 3.0
    s_time: float = 0.5
    t_time: float = 1.5
    n_list: tuple = (8, 16, 32, 64)
    n_env: int = 100
    n_paths: int = 500
    n_star: int = 64
    n_levels: int = 8
    lam_list: tuple = (0.5, 1.0, 2.0)
    horizon: float | None = None
    kappa: float = 6.0
    tail_fraction_max: float = 1e-3
    coarsen_factors: tuple = (16, 8, 4, 2, 1)
    out_dir: str = "oy-out"
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ConfigError(
                f"experiment.name: unknown experiment {self.name!r}; "
                f"choose one of {', '.join(EXPERIMENTS)}"
            )
        if self.seed < 0:
            raise ConfigError("experiment.seed: must be nonnegative")
        if self.workers < 1:
            raise ConfigError("experiment.workers: must be >= 1")
        if not self.dt > 0:
            raise ConfigError("grid.dt: must be positive")
        if not self.lam > 0:
            raise ConfigError("model.lambda: must be positive")
        if self.theta is not None:
            if not self.theta > 0:
                raise ConfigError("model.theta: must be positive")
            k = round(self.theta / self.dt)
            if k < 1:
                raise ConfigError(
                    f"model.theta: velocity {self.theta} is below the grid step "
                    f"{self.dt} (grid.dt); endpoint times n*theta cannot sit on the grid"
                )
            snapped = k * self.dt
            if abs(snapped - self.theta) > 0.02 * self.theta:
                raise ConfigError(
                    f"model.theta: snapping {self.theta} to the grid (grid.dt = {self.dt}) "
                    f"would move it to {snapped} (> 2% distortion); refine grid.dt"
                )
        if any(b <= 0 for b in self.beta_list):
            raise ConfigError("model.beta_list: entries must be positive")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ConfigError("sizes.n_list: entries must be >= 1")
        if self.n_env < 1:
            raise ConfigError("sizes.n_env: must be >= 1")
        if self.kappa <= 0:
            raise ConfigError("truncation.kappa: must be positive")


_FLOAT_KEYS = {
    ("grid", "dt"): "dt",
    ("model", "lambda"): "lam",
    ("model", "theta"): "theta",
    ("model", "s_vel"): "s_vel",
    ("model", "t_vel"): "t_vel",
    ("model", "s_time"): "s_time",
    ("model", "t_time"): "t_time",
    ("truncation", "horizon"): "horizon",
    ("truncation", "kappa"): "kappa",
    ("truncation", "tail_fraction_max"): "tail_fraction_max",
}

_INT_KEYS = {
    ("experiment", "seed"): "seed",
    ("experiment", "workers"): "workers",
    ("sizes", "n_env"): "n_env",
    ("sizes", "n_paths"): "n_paths",
    ("sizes", "n_star"): "n_star",
    ("sizes", "n_levels"): "n_levels",
}

_LIST_KEYS = {
    ("model", "beta_list"): ("beta_list", float),
    ("model", "lambda_list"): ("lam_list", float),
    ("sizes", "n_list"): ("n_list", int),
    ("grid", "coarsen_factors"): ("coarsen_factors", int),
}


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a config file; overrides (seed/workers/out_dir) win over the file,
    and OY_SEED / OY_WORKERS environment variables win over both defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path} not found or unreadable")
    if not parser.has_section("experiment") or not parser.has_option("experiment", "name"):
        raise ConfigError("experiment.name: missing (section [experiment], key name)")
    kwargs: dict = {"name": parser.get("experiment", "name").strip(), "raw": {}}
    for section in parser.sections():
        for key, value in parser.items(section):
            kwargs["raw"][f"{section}.{key}"] = value
    for (section, key), attr in _FLOAT_KEYS.items():
        if parser.has_option(section, key):
            kwargs[attr] = _parse_float(parser.get(section, key), f"{section}.{key}")
    for (section, key), attr in _INT_KEYS.items():
        if parser.has_option(section, key):
            kwargs[attr] = _parse_int(parser.get(section, key), f"{section}.{key}")
    for (section, key), (attr, typ) in _LIST_KEYS.items():
        if parser.has_option(section, key):
            kwargs[attr] = _parse_list(parser.get(section, key), typ, f"{section}.{key}")
    if parser.has_option("output", "dir"):
        kwargs["out_dir"] = parser.get("output", "dir").strip()
    env_seed = os.environ.get("OY_SEED")
    if env_seed is not None:
        kwargs["seed"] = _parse_int(env_seed, "OY_SEED")
    env_workers = os.environ.get("OY_WORKERS")
    if env_workers is not None:
        kwargs["workers"] = _parse_int(env_workers, "OY_WORKERS")
    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def _parse_float(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: not a number: {text!r}") from exc
    if math.isnan(v):
        raise ConfigError(f"{where}: NaN is not allowed")
    return v


def _parse_int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: not an integer: {text!r}") from exc


def _parse_list(text: str, typ, where: str) -> tuple:
    items = [s for chunk in text.split(",") for s in chunk.split()]
    if not items:
        raise ConfigError(f"{where}: empty list")
    try:
        return tuple(typ(s) for s in items)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad list entry in {text!r}") from exc
