"""Flat key=value config files and the run manifest.

Config files are diffable text: one `key = value` per line, `#` comments,
and a `version` key. Dotted keys address nested fields, e.g.
`weights.slowness = 1.0` or `curriculum.alpha_max = 10`.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict

from .trainer import Curriculum, LossWeights, TrainConfig

__all__ = ["CONFIG_VERSION", "parse_value", "load_config", "save_config",
           "build_train_config", "write_manifest", "file_digest"]

CONFIG_VERSION = 1


def parse_value(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def load_config(path) -> dict:
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = parse_value(value)
    return values


def save_config(path, values: dict) -> None:
    with open(path, "w") as f:
        f.write(f"version = {CONFIG_VERSION}\n")
        for key in sorted(values):
            if key != "version":
                f.write(f"{key} = {values[key]}\n")


def flatten_train_config(config: TrainConfig) -> dict:
    flat = {}
    for key, value in asdict(config).items():
        if isinstance(value, dict):
            for sub, v in value.items():
                flat[f"{key}.{sub}"] = v
        else:
            flat[key] = value
    return flat


def build_train_config(task: str, file_values: dict | None = None,
                       overrides: dict | None = None) -> TrainConfig:
    """TrainConfig from task defaults, then config file, then CLI overrides."""
    config = TrainConfig(weights=LossWeights.for_task(task))
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key, value in merged.items():
        if key == "version":
            continue
        if "." in key:
            prefix, _, sub = key.partition(".")
            target = {"weights": config.weights,
                      "curriculum": config.curriculum}.get(prefix)
            if target is None or not hasattr(target, sub):
                raise ValueError(f"unknown config key {key!r}")
            setattr(target, sub, value)
        elif hasattr(config, key):
            setattr(config, key, value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    config.__post_init__()
    config.weights.__post_init__()
    config.curriculum.__post_init__()
    return config


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(directory_or_file: str, command: str, config: dict,
                   seeds: dict, inputs: list, outputs: list,
                   started: float) -> str:
    """Persist a run manifest next to the outputs; returns its path."""
    from . import __version__
    if os.path.isdir(directory_or_file):
        path = os.path.join(directory_or_file, "manifest.json")
    else:
        path = directory_or_file + ".manifest.json"
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": {p: file_digest(p) for p in inputs if os.path.exists(p)},
        "outputs": outputs,
        "tool_version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
