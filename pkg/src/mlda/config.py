"""Experiment configuration: one JSON document, validated with pydantic."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GravityParams(_Strict):
    kind: Literal["gravity"] = "gravity"
    resolutions: List[int] = Field(default_factory=lambda: [20, 100])
    n: int = 100
    depth: float = 0.1
    n_modes: int = 32
    length_scale: float = 0.2
    variance: float = 1.0
    noise_sd: float = 0.1


class PredatorPreyParams(_Strict):
    kind: Literal["predator_prey"] = "predator_prey"
    windows: List[float] = Field(default_factory=lambda: [4.0, 8.0, 12.0])
    obs_spacing: float = 0.5
    noise_sd: float = 1.0
    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    qoi: Literal["full", "window"] = "full"


class DarcyParams(_Strict):
    kind: Literal["darcy"] = "darcy"
    m0: int = 5
    n_levels: int = 3
    n_modes: int = 64
    length_scale: float = 0.1
    sigma: float = 2.0
    noise_sd: float = 0.01
    obs_per_side: int = 5


def _n_problem_levels(spec) -> int:
    if spec.kind == "gravity":
        return len(spec.resolutions)
    if spec.kind == "predator_prey":
        return len(spec.windows)
    return spec.n_levels


class DataSpec(_Strict):
    """Where the synthetic truth comes from: a prior draw, the problem default, or explicit values."""

    truth: Union[Literal["prior", "default"], List[float]] = "prior"
    truth_seed: int = 0
    noise_seed: int = 1


class ProblemSection(_Strict):
    spec: Union[GravityParams, PredatorPreyParams, DarcyParams] = Field(discriminator="kind")
    data: DataSpec = Field(default_factory=DataSpec)


class HierarchySection(_Strict):
    levels: Optional[List[int]] = None

    @field_validator("levels")
    @classmethod
    def _increasing(cls, v):
        if v is not None and (len(v) < 1 or any(b <= a for a, b in zip(v, v[1:]))):
            raise ValueError("levels must be a non-empty strictly increasing list")
        return v


class ProposalSection(_Strict):
    kind: Literal["random_walk", "demcz"] = "random_walk"
    scale: Union[float, List[float]] = 0.1
    archive_size: int = 100
    jitter: float = 1e-6
    fine: Literal["prior", "identity"] = "prior"


class SamplerSection(_Strict):
    subchain_lengths: List[int] = Field(default_factory=list)
    pmf: Literal["uniform", "fixed"] = "uniform"
    n_steps: int = Field(gt=0)
    burn_in: int = Field(default=0, ge=0)
    chains: int = Field(default=1, ge=1)
    initial: Union[Literal["prior", "truth", "map"], List[float]] = "prior"
    baseline: bool = False


class EstimatorSection(_Strict):
    enabled: bool = False
    reference: Optional[float] = None


class AemSection(_Strict):
    enabled: bool = False
    adapt_after_burn_in: bool = False
    covariance: bool = True


class OutputSection(_Strict):
    acf_lags: int = 100
    ess_parameters: Optional[int] = None
    write_subchains: bool = True


class ExperimentConfig(_Strict):
    name: str = "experiment"
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    problem: ProblemSection
    hierarchy: HierarchySection = Field(default_factory=HierarchySection)
    proposals: ProposalSection = Field(default_factory=ProposalSection)
    sampler: SamplerSection
    estimator: EstimatorSection = Field(default_factory=EstimatorSection)
    aem: AemSection = Field(default_factory=AemSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _consistent(self):
        spec = self.problem.spec
        available = _n_problem_levels(spec)
        levels = self.hierarchy.levels or list(range(available))
        if levels[-1] >= available:
            raise ValueError(f"hierarchy.levels refers to level {levels[-1]} but the problem has {available}")
        if len(self.sampler.subchain_lengths) != len(levels) - 1:
            raise ValueError(
                f"sampler.subchain_lengths needs {len(levels) - 1} entries for {len(levels)} levels"
            )
        if any(j < 1 for j in self.sampler.subchain_lengths):
            raise ValueError("subchain lengths must be positive")
        if self.estimator.enabled and self.sampler.pmf != "uniform":
            raise ValueError("the multilevel estimator needs sampler.pmf = 'uniform'")
        if self.aem.enabled and spec.kind == "predator_prey":
            raise ValueError("aem needs levels that share one observation space; predator-prey windows do not")
        if self.sampler.initial == "map" and spec.kind != "gravity":
            raise ValueError("initial = 'map' is only available for the linear gravity problem")
        return self

    @property
    def levels(self) -> list:
        return self.hierarchy.levels or list(range(_n_problem_levels(self.problem.spec)))

    def effective(self) -> dict:
        """Plain-dict form with every default materialised."""
        return self.model_dump(mode="json")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return ExperimentConfig.model_validate(raw)


def bundled_config_dir() -> Path:
    return Path(__file__).parent / "configs"


def bundled_configs() -> dict:
    return {p.stem: p for p in sorted(bundled_config_dir().glob("*.json"))}
