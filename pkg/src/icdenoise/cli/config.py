"""Experiment configuration: JSON file + ``--set`` overrides, validated by pydantic."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..attention import AttentionKind
from ..tasks import Case, TaskSpec
from ..training import TrainConfig

EXPERIMENTS = (
    "train", "context-sweep", "dim-shift", "landscape",
    "transform", "rates", "energy-demo", "baseline-eval",
)
Experiment = Literal[
    "train", "context-sweep", "dim-shift", "landscape",
    "transform", "rates", "energy-demo", "baseline-eval",
]


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message

    @classmethod
    def from_validation(cls, err: ValidationError) -> "ConfigError":
        first = err.errors()[0]
        path = ".".join(str(p) for p in first["loc"]) or "<root>"
        return cls(path, first["msg"])


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TaskSection(_Strict):
    case: Case = Case.LINEAR_SUBSPACE
    n: int = Field(16, ge=1)
    d: int = Field(8, ge=0)
    K: int = Field(8, ge=1)
    R: float = Field(1.0, gt=0)
    sigma0_sq: float = Field(2.0, gt=0)
    sigmaZ_sq: float = Field(1.0, gt=0)
    weights: Optional[list[float]] = None

    @model_validator(mode="after")
    def _check_spec(self):
        self.to_spec()
        return self

    def to_spec(self) -> TaskSpec:
        return TaskSpec(
            self.case, self.n, self.d, self.K, self.R, self.sigma0_sq, self.sigmaZ_sq,
            None if self.weights is None else tuple(self.weights),
        )


class TrainSection(_Strict):
    kind: AttentionKind = AttentionKind.LINEAR
    epochs: int = Field(500, ge=0)
    batch_size: int = Field(80, ge=1)
    learning_rate: float = Field(1e-2, gt=0)
    adam_beta1: float = Field(0.9, gt=0, lt=1)
    adam_beta2: float = Field(0.999, gt=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    eval_prompts: int = Field(1000, ge=1)
    record_every: int = Field(10, ge=1)
    n_prompts: int = Field(800, ge=1)
    context_len: int = Field(500, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.batch_size > self.n_prompts:
            raise ValueError("batch_size must not exceed n_prompts")
        if self.kind is AttentionKind.GAUSSIAN:
            raise ValueError("Gaussian-kernel attention is evaluation-only")
        return self

    def to_config(self, seed: int, **changes) -> TrainConfig:
        fields = self.model_dump(exclude={"kind"})
        fields.update(changes)
        return TrainConfig(seed=seed, **fields)


class SweepSection(_Strict):
    L_values: list[int] = Field(default_factory=lambda: [16, 64, 256, 1024], min_length=1)
    d_values: list[int] = Field(default_factory=lambda: [2, 4, 8, 12, 15], min_length=1)
    alpha_grid: list[float] = Field(default_factory=lambda: np.linspace(-2, 2, 50).tolist(), min_length=1)
    beta_grid: list[float] = Field(default_factory=lambda: np.linspace(-20, 20, 50).tolist(), min_length=1)
    eval_prompts: int = Field(2000, ge=1)
    trials: int = Field(500, ge=100)
    delta: float = Field(0.1, gt=0, lt=1)
    reference_factor: int = Field(100, ge=1)
    steps: int = Field(20, ge=1)
    alpha: float = 1.0
    beta: Optional[float] = None
    gamma: Optional[float] = None
    max_condition: float = Field(3.0, gt=1)

    @field_validator("L_values", "d_values")
    @classmethod
    def _positive(cls, v):
        if any(x < 1 for x in v):
            raise ValueError("entries must be >= 1")
        return v


class ExperimentConfig(_Strict):
    experiment: Experiment
    task: TaskSection = Field(default_factory=TaskSection)
    train: TrainSection = Field(default_factory=TrainSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    ideal: bool = False
    out: Optional[str] = None

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.experiment == "dim-shift":
            bad = [d for d in self.sweep.d_values if d >= self.task.n]
            if bad:
                raise ValueError(f"sweep.d_values: d_infer must be < n, got {bad}")
        if self.experiment in ("dim-shift", "transform") and self.task.case is not Case.LINEAR_SUBSPACE:
            raise ValueError(f"task.case: {self.experiment} needs the linear case")
        if self.experiment == "energy-demo" and self.task.case is Case.LINEAR_SUBSPACE:
            raise ValueError("task.case: energy-demo needs the sphere or mixture case")
        return self

    @property
    def spec(self) -> TaskSpec:
        return self.task.to_spec()


# Per-experiment defaults, merged under the user's file and overrides.
DEFAULTS: dict[str, dict[str, Any]] = {
    "train": {"seeds": [0, 1, 2, 3, 4, 5]},
    "context-sweep": {"sweep": {"L_values": [16, 64, 256, 1024], "eval_prompts": 2000}},
    "dim-shift": {"sweep": {"d_values": [2, 4, 8, 12, 15], "L_values": [100, 500, 2000],
                            "eval_prompts": 1000}},
    "landscape": {
        "task": {"case": "sphere", "n": 16, "d": 8, "R": 1.0, "sigmaZ_sq": 0.1},
        "train": {"kind": "softmax"},
        "sweep": {"eval_prompts": 2000},
    },
    "transform": {},
    "rates": {
        "task": {"case": "sphere", "n": 16, "d": 2, "R": 1.0, "sigmaZ_sq": 0.5},
        "sweep": {"L_values": [100, 200, 400, 800], "trials": 500, "delta": 0.1},
    },
    "energy-demo": {
        "task": {"case": "sphere", "n": 2, "d": 1, "R": 1.0, "sigmaZ_sq": 10.0},
        "train": {"context_len": 20},
        "sweep": {"steps": 20, "eval_prompts": 2000, "alpha": 1.0},
    },
    "baseline-eval": {"sweep": {"eval_prompts": 10000}},
}


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError("--set", f"expected key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    data = copy.deepcopy(data)
    for item in overrides:
        path, value = parse_override(item)
        node = data
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(".".join(path), "cannot set a key below a scalar")
        node[path[-1]] = value
    return data


def resolve_config(experiment: str, file_data: dict | None = None,
                   overrides: list[str] | None = None, **top: Any) -> ExperimentConfig:
    """Defaults < config file < ``--set`` overrides < explicit keyword fields."""
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    data = deep_merge(DEFAULTS.get(experiment, {}), file_data or {})
    if data.get("experiment", experiment) != experiment:
        raise ConfigError("experiment", f"config file is for {data['experiment']!r}")
    data["experiment"] = experiment
    data = apply_overrides(data, overrides or [])
    for k, v in top.items():
        if v is not None:
            data[k] = v
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError.from_validation(err) from None


def load_config_file(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError("--config", str(err)) from None
    if not isinstance(data, dict):
        raise ConfigError("--config", "top level must be a JSON object")
    return data


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
