"""Training configuration, presets, and flat TOML config files.

Config files are flat key = value tables; keys route to ModelConfig,
MatchWeights, or TrainConfig fields by name. A ``preset`` key ("desk" or
"paper") selects the base configuration; explicit keys and CLI flags then
override individual fields.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .matching import MatchWeights
from .model import ConfigError, ModelConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    match: MatchWeights = field(default_factory=MatchWeights)
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 4
    steps: int = 2000
    epochs: int | None = None    # when set, overrides steps
    seed: int = 0
    threshold: float = 0.35
    eval_interval: int = 200     # steps between val evals; 0 disables
    augment: bool = True
    scale_range: tuple[float, float] = (0.75, 1.25)
    flip_prob: float = 0.5
    dataset_dir: str | None = None
    out_dir: str = "runs/default"

    def validate(self) -> "TrainConfig":
        self.model.validate()
        self.match.validate()
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got "
                              f"{self.batch_size}")
        if self.steps < 1 and self.epochs is None:
            raise ConfigError("a positive step or epoch budget is required")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got "
                              f"{self.threshold}")
        return self


def desk_preset() -> TrainConfig:
    """Small configuration that trains on synthetic scenes in minutes."""
    return TrainConfig(
        model=ModelConfig(variant="dual-dete", layers=2, c1=64, c2=64, c=32,
                          queries=128, decoder_layers=2, heads=4,
                          downsample=8, crop=64),
        match=MatchWeights(),
        lr=1e-4, weight_decay=1e-4, batch_size=4, steps=2000)


def paper_preset() -> TrainConfig:
    """Full-scale configuration constants for real-data training."""
    return TrainConfig(
        model=ModelConfig(variant="dual-dete", layers=6, c1=64, c2=64, c=32,
                          queries=700, decoder_layers=2, heads=4,
                          downsample=8, crop=256),
        match=MatchWeights(lam=0.5),
        lr=1e-5, weight_decay=5e-4, batch_size=8, steps=2000, epochs=1500,
        threshold=0.35)


PRESETS = {"desk": desk_preset, "paper": paper_preset}

_MODEL_KEYS = {f.name for f in fields(ModelConfig)}
_MATCH_KEYS = {f.name for f in fields(MatchWeights)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"model", "match"}


def apply_overrides(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    """Route flat key/value overrides onto the nested config dataclasses."""
    model_kw, match_kw, train_kw = {}, {}, {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in _MODEL_KEYS:
            model_kw[key] = value
        elif key in _MATCH_KEYS:
            match_kw[key] = value
        elif key in _TRAIN_KEYS:
            if key == "scale_range" and isinstance(value, list):
                value = tuple(value)
            train_kw[key] = value
        else:
            raise ConfigError(f"unknown config key: {key}")
    cfg = replace(cfg, **train_kw)
    cfg.model = replace(cfg.model, **model_kw)
    cfg.match = replace(cfg.match, **match_kw)
    return cfg


def load_config_file(path) -> TrainConfig:
    raw = tomllib.loads(Path(path).read_text("utf-8"))
    preset = raw.pop("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of "
                          f"{sorted(PRESETS)}")
    return apply_overrides(PRESETS[preset](), raw)
