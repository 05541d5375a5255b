from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, Field, model_validator

from src.core.estimate import FitOptions
from src.core.likelihood import Mode
from src.core.models import CensoringSpec, InversionSettings, MhtModel, Normalization
from src.core.params import JumpFamily, ModelStructure

Command = Literal["fit", "simulate", "density", "survival", "check-inversion"]


class RunConfig(BaseModel):
    """One CLI invocation; YAML run files use the same keys as the flags."""

    command: Command

    # data
    input: str | None = None
    input_format: Literal["kennan", "csv"] = "csv"
    duration_col: str = "duration"
    status_col: str | None = None
    covariate_cols: list[str] = []
    days_to_weeks: bool | None = None
    output: str | None = None

    # model structure (fit) or a concrete model (everything else)
    jump_family: JumpFamily = "none"
    n_shocks: int = 0
    n_support: int = Field(default=1, ge=1)
    normalization: Normalization = "drift"
    model: MhtModel | None = None
    model_file: str | None = None

    # inversion overrides
    c_over_t: float | None = None
    h_times_t: float | None = None
    R: int | None = None
    M: int | None = None

    # estimation
    tolerance: float | None = None
    max_iter: int | None = None
    multistart: int | None = None
    seed: int = 0
    mode: Mode = "auto"
    n_jobs: int | None = None

    # density / survival grids
    t_values: list[float] | None = None
    t_min: float = Field(default=0.05, gt=0)
    t_max: float = Field(default=20.0, gt=0)
    n_points: int = Field(default=400, ge=2)
    log_grid: bool = False
    x: list[float] = []
    hazard: bool = False

    # simulation
    n_draws: int = Field(default=1000, gt=0)
    censoring_kind: Literal["none", "fixed", "exponential"] = "none"
    censoring_value: float | None = None

    # inversion check
    m_values: list[int] | None = None
    n_param_draws: int = Field(default=100, gt=0)

    @model_validator(mode="after")
    def _check(self) -> RunConfig:
        if self.command == "fit" and self.input is None:
            raise ValueError("fit needs an input dataset")
        if self.command in ("simulate", "density", "survival") and self.model is None and self.model_file is None:
            raise ValueError(f"{self.command} needs a model or model_file")
        if self.t_max <= self.t_min and self.t_values is None:
            raise ValueError("t_max must exceed t_min")
        return self

    def structure(self, n_covariates: int) -> ModelStructure:
        return ModelStructure(
            jump_family=self.jump_family,
            n_shocks=self.n_shocks,
            n_support=self.n_support,
            n_covariates=n_covariates,
            normalization=self.normalization,
        )

    @property
    def inversion(self) -> InversionSettings:
        overrides = {
            k: v for k, v in
            {"c_over_t": self.c_over_t, "h_times_t": self.h_times_t, "R": self.R, "M": self.M}.items()
            if v is not None
        }
        return InversionSettings(**overrides)

    @property
    def fit_options(self) -> FitOptions:
        overrides = {
            k: v for k, v in
            {"tolerance": self.tolerance, "max_iter": self.max_iter,
             "multistart": self.multistart, "n_jobs": self.n_jobs}.items()
            if v is not None
        }
        return FitOptions(seed=self.seed, mode=self.mode, **overrides)

    @property
    def censoring(self) -> CensoringSpec:
        return CensoringSpec(kind=self.censoring_kind, value=self.censoring_value)


def load_run_config(path: str | Path) -> dict:
    with open(Path(path), encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def load_model(path: str | Path) -> MhtModel:
    """A model from YAML or JSON; fit result files contribute their estimate."""
    with open(Path(path), encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if "theta_hat" in raw:
        raw = raw["theta_hat"]
    return MhtModel.model_validate(raw)
