"""Experiment configuration dataclasses with YAML and hashing support."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import yaml

ALGORITHMS = ("heuristic", "dqn", "dqn_gvf", "dez_dqn_gvf", "lp_bound")


@dataclass(frozen=True)
class EnvParams:
    alpha: float = 1.0            # capacity-overuse penalty weight
    forecast_window: int = 8      # trailing-average length, two days


@dataclass(frozen=True)
class RewardMod:
    """Reward modifications used by the fine-tuning studies."""

    wastage_weight: float = 1.0
    critical_override: float | None = None


@dataclass(frozen=True)
class AgentParams:
    hidden_dims: tuple[int, ...] = (64, 64)
    lr: float = 1e-3
    gamma: float = 0.99
    buffer_capacity: int = 100_000
    batch_size: int = 64
    train_every: int = 4
    target_sync: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    anneal_frac: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    algorithm: str
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    episodes: int = 300
    env: EnvParams = EnvParams()
    agent: AgentParams = AgentParams()
    reward_mod: RewardMod = RewardMod()
    heuristic_target: float = 0.5
    lp_engine: str = "auto"
    lp_max_iters: int = 500_000
    lp_time_limit: float | None = None
    collect_decisions: bool = True

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "env" in data and isinstance(data["env"], dict):
            data["env"] = EnvParams(**data["env"])
        if "agent" in data and isinstance(data["agent"], dict):
            data["agent"] = AgentParams(**data["agent"])
        if "reward_mod" in data and isinstance(data["reward_mod"], dict):
            data["reward_mod"] = RewardMod(**data["reward_mod"])
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
