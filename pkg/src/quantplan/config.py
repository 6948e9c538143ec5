"""Experiment configuration: JSON file -> validated dataclasses."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .env import WallEnvConfig
from .errors import ValidationError
from .nn import TrainConfig
from .planner import CEMConfig, PlannerBudget
from .policies import ALL_VARIANT_NAMES, CORE_VARIANT_NAMES

DEFAULT_BUDGETS = {
    "bA": {"goal_h": 9, "opt_steps": 2, "max_iter": 2, "seeds": [0, 1, 2]},
    "bB": {"goal_h": 12, "opt_steps": 3, "max_iter": 3, "seeds": [0, 1]},
}


@dataclass
class BudgetSpec:
    budget: PlannerBudget
    seeds: list[int]


@dataclass
class DatasetConfig:
    n_traj: int = 200
    traj_len: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_traj < 1 or self.traj_len < 1:
            raise ValidationError("dataset.n_traj and dataset.traj_len must be >= 1")


@dataclass
class ExperimentConfig:
    env: WallEnvConfig = field(default_factory=WallEnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    budgets: dict[str, BudgetSpec] = field(default_factory=dict)
    cem: CEMConfig = field(default_factory=CEMConfig)
    episodes_per_run: int = 10
    variants: list[str] = field(default_factory=lambda: list(CORE_VARIANT_NAMES))
    output_dir: str = "out"
    master_seed: int = 0

    def __post_init__(self):
        if not self.budgets:
            self.budgets = {
                name: BudgetSpec(
                    PlannerBudget(d["goal_h"], d["opt_steps"], d["max_iter"]), list(d["seeds"])
                )
                for name, d in DEFAULT_BUDGETS.items()
            }
        if self.episodes_per_run < 1:
            raise ValidationError("episodes_per_run must be >= 1")

    def resolved(self) -> dict:
        d = asdict(self)
        d["budgets"] = {
            name: {**asdict(bs.budget), "seeds": bs.seeds} for name, bs in self.budgets.items()
        }
        return d

    def config_hash(self) -> str:
        # output_dir is a destination, not part of the experiment identity
        resolved = {k: v for k, v in self.resolved().items() if k != "output_dir"}
        canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _build(cls, data: dict, path: str):
    try:
        return cls(**data)
    except TypeError as e:
        raise ValidationError(f"config field {path}: {e}") from e
    except ValidationError as e:
        raise ValidationError(f"config field {path}: {e}") from e


def _resolve_variants(v, path: str) -> list[str]:
    if v == "core":
        return list(CORE_VARIANT_NAMES)
    if v == "all":
        return list(ALL_VARIANT_NAMES)
    if isinstance(v, list):
        for name in v:
            if name not in ALL_VARIANT_NAMES:
                raise ValidationError(f"config field {path}: unknown variant {name!r}")
        return list(v)
    raise ValidationError(f"config field {path}: expected 'core', 'all' or a list")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ValidationError("config root must be a JSON object")
    known = {
        "env", "train", "dataset", "budgets", "cem",
        "episodes_per_run", "variants", "output_dir", "master_seed",
    }
    for key in data:
        if key not in known:
            raise ValidationError(f"config field {key}: unknown field")
    budgets = {}
    for name, d in data.get("budgets", DEFAULT_BUDGETS).items():
        d = dict(d)
        seeds = d.pop("seeds", None)
        if not seeds:
            raise ValidationError(f"config field budgets.{name}.seeds: required non-empty list")
        budgets[name] = BudgetSpec(_build(PlannerBudget, d, f"budgets.{name}"), list(seeds))
    return _build(
        ExperimentConfig,
        {
            "env": _build(WallEnvConfig, data.get("env", {}), "env"),
            "train": _build(TrainConfig, data.get("train", {}), "train"),
            "dataset": _build(DatasetConfig, data.get("dataset", {}), "dataset"),
            "budgets": budgets,
            "cem": _build(CEMConfig, data.get("cem", {}), "cem"),
            "episodes_per_run": data.get("episodes_per_run", 10),
            "variants": _resolve_variants(data.get("variants", "core"), "variants"),
            "output_dir": data.get("output_dir", "out"),
            "master_seed": data.get("master_seed", 0),
        },
        "<root>",
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"config file {path} is not valid JSON: {e}") from e
    return config_from_dict(data)
