"""Declarative configuration shared by the ``generate``/``evaluate``/``aggregate`` commands.

A single YAML (or JSON) document with two optional sections::

    simulation:
      num_runs: 24
      objects: [cube, target, eef]
    evaluation:
      thresholds: {cube: 0.015, target: 0.015, eef: 0.1}

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .metrics import DEFAULT_THRESHOLDS


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SimulationConfig(_Strict):
    seed: int = 0
    num_runs: int = Field(1, ge=1)
    num_episodes: int = Field(10, ge=1)
    steps: int = Field(100, ge=3)
    objects: list[str] = Field(default_factory=lambda: ["cube", "target", "eef"], min_length=1)
    object_policies: dict[str, Literal["smoothed_random_walk", "stationary", "constant_velocity"]] = Field(
        default_factory=dict
    )
    step_std: float = Field(0.004, ge=0)
    initial_speed_std: float = Field(0.0, ge=0)
    box: tuple[float, float] = (-0.9, 0.9)
    num_distractors: int = Field(13, ge=0)
    distractor_policy: Literal["stationary", "random_walk"] = "random_walk"
    epochs: list[int] = Field(default_factory=lambda: [0], min_length=1)
    noise_std: Union[float, list[float]] = 0.0
    random_transforms: bool = True

    @field_validator("objects")
    @classmethod
    def _unique_objects(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("object names must be unique")
        return v

    @field_validator("epochs")
    @classmethod
    def _increasing(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("epochs must be strictly increasing")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if isinstance(self.noise_std, list):
            if len(self.noise_std) != len(self.epochs):
                raise ValueError("noise_std list must have one entry per epoch")
            if any(s < 0 for s in self.noise_std):
                raise ValueError("noise_std entries must be nonnegative")
        elif self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        unknown = set(self.object_policies) - set(self.objects)
        if unknown:
            raise ValueError(f"object_policies names unknown objects {sorted(unknown)}")
        if not self.box[0] < self.box[1]:
            raise ValueError("box must be (low, high) with low < high")
        return self

    def noise_for_epoch(self, index: int) -> float:
        return self.noise_std[index] if isinstance(self.noise_std, list) else self.noise_std


class BootstrapConfig(_Strict):
    level: float = Field(0.95, gt=0, lt=1)
    num_bootstrap: int = Field(2000, ge=100)
    seed: int = 0


class EvaluationConfig(_Strict):
    thresholds: dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    normalization: Literal["sum", "mean"] = "mean"
    fit_split: Literal["shared", "disjoint"] = "shared"
    softmax_alpha: float = Field(1.0, gt=0)
    heatmap_sigma: float = Field(0.1, gt=0)
    bootstrap: BootstrapConfig = Field(default_factory=BootstrapConfig)
    smoothing_sigma_steps: float = Field(2.5, gt=0)
    velocity_beta: float = Field(0.1, ge=0)

    @field_validator("thresholds")
    @classmethod
    def _positive(cls, v):
        bad = {k: mu for k, mu in v.items() if not mu > 0}
        if bad:
            raise ValueError(f"thresholds must be positive: {bad}")
        return v


class KptrackConfig(_Strict):
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(doc: Optional[dict]) -> KptrackConfig:
    try:
        return KptrackConfig.model_validate(doc or {})
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_format_validation(exc)}") from exc


def load_config(path: Optional[str | Path]) -> KptrackConfig:
    """Read a YAML/JSON config file; ``None`` yields all defaults."""
    if path is None:
        return KptrackConfig()
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON ({exc})") from exc
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(doc)
