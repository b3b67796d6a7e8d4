"""Experiment configuration files (YAML key-value with nested sections)."""

from __future__ import annotations

import yaml

from .experiments import ConfigError, resolve_config

__all__ = ["load_config", "ConfigError"]


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"config does not parse: {e}")
    if raw is None:
        raise ConfigError("config file is empty")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return resolve_config(raw)
