"""Config resolution: defaults <- YAML file <- command-line overrides.

The config file is a flat YAML mapping. A run manifest is also accepted
wherever a config file is (its resolved ``config`` block is used), which is
how runs are replayed.
"""

from __future__ import annotations

import os
from pathlib import Path

import yaml

from .errors import ConfigError
from .grids import ExperimentConfig

ENV_SEED = "XPLAIN_SEED"

CONFIG_DEFAULTS = {
    "data": None,
    "seed": None,  # falls back to $XPLAIN_SEED, then 0
    "split_seed": 0,
    "balanced": False,
    "head_version": 0,
    "lr": 0.001,
    "optimizer": "sgd",
    "epochs": 10,
    "batch_size": 32,
    "augmentation": "none",
    "resize": 256,
    "crop": 224,
}


def default_seed() -> int:
    raw = os.environ.get(ENV_SEED, "0")
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{ENV_SEED} must be an integer, got {raw!r}") from exc


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    if "command" in data and "config" in data:  # a run manifest
        data = data["config"]
    return data


def resolve_config(file_cfg: dict, overrides: dict) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    unknown = set(file_cfg) - set(CONFIG_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(file_cfg)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if cfg["seed"] is None:
        cfg["seed"] = default_seed()
    return cfg


def _square(value, key: str) -> tuple:
    if isinstance(value, int):
        return (value, value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (int(value[0]), int(value[1]))
    raise ConfigError(f"{key} must be an int or [h, w], got {value!r}")


def experiment_from_config(cfg: dict) -> ExperimentConfig:
    if not cfg.get("data"):
        raise ConfigError("no dataset root configured (--data or 'data:' in the config)")
    try:
        return ExperimentConfig(
            dataset_root=str(cfg["data"]),
            seed=int(cfg["seed"]),
            split_seed=int(cfg["split_seed"]),
            balanced=bool(cfg["balanced"]),
            head_version=int(cfg["head_version"]),
            augmentation=str(cfg["augmentation"]),
            learning_rate=float(cfg["lr"]),
            optimizer=str(cfg["optimizer"]),
            epochs=int(cfg["epochs"]),
            batch_size=int(cfg["batch_size"]),
            resize=_square(cfg["resize"], "resize"),
            crop=_square(cfg["crop"], "crop"),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
