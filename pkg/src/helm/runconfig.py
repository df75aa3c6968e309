"""Experiment configuration as a single YAML document.

Unknown keys are rejected everywhere so a resolved-config snapshot re-fed
to the trainer reproduces the original run exactly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .training import ByolSettings, EncoderSettings, GraphSettings, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # synthetic | manifest
    n_train: int = 256
    n_test: int = 128
    image_size: int = 32
    channels: int = 3
    leaves_per_sample: tuple[int, int] = (1, 3)
    noise_std: float = 0.05
    data_seed: int = 1234
    train_manifest: str | None = None
    test_manifest: str | None = None

    def __post_init__(self):
        if self.source not in ("synthetic", "manifest"):
            raise ConfigError(f"data.source must be synthetic or manifest, got {self.source!r}")
        if self.source == "manifest" and not (self.train_manifest and self.test_manifest):
            raise ConfigError("manifest source requires train_manifest and test_manifest")


@dataclass(frozen=True)
class RunConfig:
    hierarchy: str = "toy"  # bundled name (ucm, toy) or a YAML file path
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str | None = None


_TUPLE_FIELDS = {"leaves_per_sample", "loss_weights", "betas"}


def _build(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(payload).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(payload) - set(fields)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in payload.items():
        sub = {"data": DataConfig, "train": TrainConfig, "encoder": EncoderSettings,
               "graph": GraphSettings, "byol": ByolSettings}.get(name)
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{path}.{name}" if path else name)
        elif name in _TUPLE_FIELDS and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path or 'config'}: {e}") from e


def load_config(text: str) -> RunConfig:
    doc = yaml.safe_load(text)
    if doc is None:
        doc = {}
    return _build(RunConfig, doc, "")


def dump_config(cfg: RunConfig) -> str:
    def _clean(obj):
        if dataclasses.is_dataclass(obj):
            return {k: _clean(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, tuple):
            return [_clean(v) for v in obj]
        if isinstance(obj, dict):
            return {k: _clean(v) for k, v in obj.items()}
        return obj

    return yaml.safe_dump(_clean(cfg), sort_keys=False)
