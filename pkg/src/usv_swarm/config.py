"""Run configuration: JSON in, fully resolved dataclasses out.

Missing keys take their defaults; unknown keys are rejected so a misspelled
hyperparameter fails loudly instead of silently using the default.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .ddpg import DdpgHyper
from .dynamics import VesselParams
from .env import WorldConfig
from .rewards import RewardWeights

ALGORITHMS = ("ddpg_single", "maddpg")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 100
    eval_every: int = 50
    eval_episodes: int = 5
    checkpoint_every: int = 50
    eval_seed: int = 0

    def __post_init__(self):
        for name in ("episodes", "eval_every", "eval_episodes", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"training.{name} must be at least 1")


@dataclass(frozen=True)
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    algorithm: str = "maddpg"
    training: TrainingConfig = field(default_factory=TrainingConfig)
    agent: DdpgHyper = field(default_factory=DdpgHyper)
    output_dir: str = "runs/default"
    master_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.algorithm == "ddpg_single" and self.world.n_agents != 1:
            raise ValueError(f"algorithm ddpg_single requires world.n_agents = 1, "
                             f"got {self.world.n_agents}")


_NESTED = {
    (WorldConfig, "vessel"): VesselParams,
    (WorldConfig, "reward_weights"): RewardWeights,
    (RunConfig, "world"): WorldConfig,
    (RunConfig, "training"): TrainingConfig,
    (RunConfig, "agent"): DdpgHyper,
}


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get((cls, key))
        kwargs[key] = _build(sub, value, f"{path}.{key}" if path else key) if sub else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def world_from_dict(data: dict) -> WorldConfig:
    return _build(WorldConfig, data, "world")


def to_dict(obj) -> dict:
    """Resolved configuration as plain JSON-compatible data (defaults included)."""
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            value = to_dict(value)
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(config: RunConfig, path):
    Path(path).write_text(json.dumps(to_dict(config), indent=2) + "\n")
