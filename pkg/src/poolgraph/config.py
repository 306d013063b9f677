"""Pipeline configuration files: flat ``key = value`` lines grouped in sections.

Section names only organise the file; every key must name a
:class:`~poolgraph.pipeline.PipelineConfig` field, whichever section it
sits in. Example::

    [ensemble]
    alpha = 0.5
    resolution = 1.0

    [drift]
    theta_drift = 0.3
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .pipeline import PipelineConfig


class ConfigError(ValueError):
    pass


def _cast(name: str, raw: str, kind: type):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if kind is int:
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
        if value != int(value):
            raise ConfigError(f"{name}: expected an integer, got {raw!r}")
        return int(value)
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_overrides(items) -> dict:
    """Turn ``key=value`` strings into typed config fields."""
    types = PipelineConfig.field_types()
    values = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"expected key=value, got {item!r}")
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _cast(key, raw, types[key])
    return values


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = path.read_text(encoding="utf-8")
    try:
        # keys before the first section header are allowed
        parser.read_string("[__top__]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    types = PipelineConfig.field_types()
    values, origin = {}, {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            if key in values:
                raise ConfigError(f"{path}: {key!r} set in both [{origin[key]}] and [{section}]")
            values[key] = _cast(key, raw, types[key])
            origin[key] = section
    return values


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """File values first, then ``overrides`` on top."""
    values = read_config_file(path) if path else {}
    values.update(overrides or {})
    try:
        return PipelineConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def dump_config(config: PipelineConfig) -> str:
    sections = {
        "stream": ("batch_size", "seed"),
        "ensemble": ("alpha", "resolution", "damping", "mode"),
        "drift": ("beta", "theta_drift", "force_drift_every"),
        "pool": ("gamma", "capacity"),
        "threshold": ("threshold_policy", "threshold_k", "threshold_q", "threshold_window"),
    }
    lines = []
    for name, keys in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {getattr(config, k)}" for k in keys)
        lines.append("")
    return "\n".join(lines)
