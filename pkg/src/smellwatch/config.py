"""Layered runtime configuration: flags > environment > config file > defaults.

The config file is YAML (JSON works too, being a YAML subset). Unknown
keys are rejected so typos fail loudly instead of silently using a
default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

ENV_PREFIX = "SMELLWATCH_"

_TOP_KEYS = {"data_dir", "catalog_path", "manifests_dir", "server", "ingest",
             "aggregation", "detection"}
_SERVER_KEYS = {"host", "port", "cors_origin"}
_INGEST_KEYS = {"lateness_horizon_s"}
_AGG_KEYS = {"window_s", "cycle_period_s", "lateness_horizon_s"}
_DETECTION_KEYS = {"cycle_period_s", "history_depth", "min_history", "params"}


class ConfigError(ValueError):
    """The config file or environment carries an unusable value."""


@dataclass
class CliConfig:
    data_dir: str = "./smellwatch-data"
    catalog_path: str | None = None
    manifests_dir: str | None = None
    host: str = "127.0.0.1"
    port: int = 8070
    cors_origin: str | None = None
    ingest_lateness_s: int = 60
    window_s: int = 60
    aggregation_cycle_period_s: int = 60
    aggregation_lateness_s: int = 60
    detection_cycle_period_s: int = 60
    history_depth: int = 10
    min_history: int = 3
    detection_params: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def window_us(self) -> int:
        return self.window_s * 1_000_000

    @property
    def aggregation_lateness_us(self) -> int:
        return self.aggregation_lateness_s * 1_000_000

    @property
    def ingest_lateness_us(self) -> int:
        return self.ingest_lateness_s * 1_000_000


def _check_keys(section: str, doc: dict, allowed: set[str]) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} key(s): {', '.join(sorted(unknown))}")


def _apply_file(config: CliConfig, path: str | Path) -> None:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must be a mapping")
    _check_keys("top-level", doc, _TOP_KEYS)

    if "data_dir" in doc:
        config.data_dir = str(doc["data_dir"])
    if "catalog_path" in doc:
        config.catalog_path = str(doc["catalog_path"])
    if "manifests_dir" in doc:
        config.manifests_dir = str(doc["manifests_dir"])

    server = doc.get("server") or {}
    _check_keys("server", server, _SERVER_KEYS)
    config.host = str(server.get("host", config.host))
    config.port = int(server.get("port", config.port))
    if "cors_origin" in server:
        config.cors_origin = server["cors_origin"]

    ingest = doc.get("ingest") or {}
    _check_keys("ingest", ingest, _INGEST_KEYS)
    config.ingest_lateness_s = int(ingest.get("lateness_horizon_s", config.ingest_lateness_s))

    agg = doc.get("aggregation") or {}
    _check_keys("aggregation", agg, _AGG_KEYS)
    config.window_s = int(agg.get("window_s", config.window_s))
    config.aggregation_cycle_period_s = int(
        agg.get("cycle_period_s", config.aggregation_cycle_period_s))
    config.aggregation_lateness_s = int(
        agg.get("lateness_horizon_s", config.aggregation_lateness_s))

    detection = doc.get("detection") or {}
    _check_keys("detection", detection, _DETECTION_KEYS)
    config.detection_cycle_period_s = int(
        detection.get("cycle_period_s", config.detection_cycle_period_s))
    config.history_depth = int(detection.get("history_depth", config.history_depth))
    config.min_history = int(detection.get("min_history", config.min_history))
    params = detection.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("detection.params must map smell ids to parameter maps")
    for smell_id, overrides in params.items():
        if not isinstance(overrides, dict):
            raise ConfigError(f"detection.params.{smell_id} must be a mapping")
        config.detection_params[str(smell_id)] = {
            str(k): float(v) for k, v in overrides.items()}


def _apply_env(config: CliConfig, env: dict[str, str]) -> None:
    mapping = {
        "DATA_DIR": ("data_dir", str),
        "CATALOG_PATH": ("catalog_path", str),
        "MANIFESTS_DIR": ("manifests_dir", str),
        "HOST": ("host", str),
        "PORT": ("port", int),
        "WINDOW_S": ("window_s", int),
        "HISTORY_DEPTH": ("history_depth", int),
        "MIN_HISTORY": ("min_history", int),
    }
    for suffix, (attr, cast) in mapping.items():
        raw = env.get(ENV_PREFIX + suffix)
        if raw is not None:
            try:
                setattr(config, attr, cast(raw))
            except ValueError as exc:
                raise ConfigError(f"{ENV_PREFIX}{suffix}={raw!r}: {exc}") from exc


def load_config(config_path: str | Path | None = None,
                env: dict[str, str] | None = None,
                **flag_overrides) -> CliConfig:
    """Resolve a CliConfig with precedence flags > env > file > defaults."""
    config = CliConfig()
    if config_path is not None:
        _apply_file(config, config_path)
    _apply_env(config, env if env is not None else dict(os.environ))
    for key, value in flag_overrides.items():
        if value is None:
            continue
        if not hasattr(config, key):
            raise ConfigError(f"unknown config override {key!r}")
        setattr(config, key, value)
    return config
