"""Run configuration: defaults < checkpoint < config file < command-line overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_items: int = 16
    size: int = 32


@dataclass
class RunConfig:
    subcommand: str
    config_path: str | None = None
    overrides: dict = field(default_factory=dict)
    seed: int | None = None
    out: str | None = None


TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
SYNTH_KEYS = {f.name for f in fields(SynthConfig)}
KNOWN_KEYS = TRAIN_KEYS | SYNTH_KEYS


def parse_override(text: str) -> tuple[str, object]:
    """``key=value``; the value is read as JSON when it parses, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} not found")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def resolve(file_values: dict | None = None, overrides: dict | None = None,
            base: dict | None = None) -> tuple[TrainConfig, SynthConfig, dict]:
    """Merge the layers key by key; return both configs and the provenance of each key."""
    layers = [("default", {**asdict(TrainConfig()), **asdict(SynthConfig())}),
              ("checkpoint", base or {}),
              ("file", file_values or {}),
              ("override", overrides or {})]
    merged, source = {}, {}
    for name, layer in layers:
        unknown = set(layer) - KNOWN_KEYS
        if unknown and name != "checkpoint":
            raise ConfigError(f"unknown config keys from {name}: {sorted(unknown)}")
        for k, v in layer.items():
            if k in KNOWN_KEYS:
                merged[k] = v
                source[k] = name
    try:
        train = TrainConfig(**{k: merged[k] for k in TRAIN_KEYS})
        synth = SynthConfig(**{k: merged[k] for k in SYNTH_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return train, synth, source


def snapshot(train: TrainConfig, synth: SynthConfig, run: RunConfig, source: dict) -> dict:
    return {"subcommand": run.subcommand, "config_file": run.config_path,
            "train": train.to_dict(), "synth": asdict(synth), "source": source}


def write_snapshot(out_dir, snap: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "resolved_config.json"
    path.write_text(json.dumps(snap, indent=2, sort_keys=True))
    return path
