"""Natural-scale parameter layout shared by the likelihood and the optimiser.

Vector order: mu, sigma, jump parameters, beta, support points v, masses pi.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.core.errors import InvalidArgumentError
from src.core.models import (
    CovariateLink,
    DiscreteShocks,
    GammaShocks,
    LevyExponentSpec,
    MhtModel,
    MixingDistribution,
    Normalization,
)

JumpFamily = Literal["none", "discrete", "gamma"]


class ModelStructure(BaseModel):
    """Shape of a model: jump family, counts and normalisation, no values."""

    model_config = ConfigDict(frozen=True)

    jump_family: JumpFamily = "none"
    n_shocks: int = Field(default=0, ge=0)
    n_support: int = Field(default=1, ge=1)
    n_covariates: int = Field(default=0, ge=0)
    normalization: Normalization = "drift"

    @model_validator(mode="after")
    def _check(self) -> ModelStructure:
        if self.jump_family == "discrete" and self.n_shocks < 1:
            raise ValueError("discrete shocks need n_shocks >= 1")
        if self.jump_family != "discrete" and self.n_shocks:
            raise ValueError(f"n_shocks is only meaningful for discrete shocks, got {self.n_shocks}")
        return self

    @property
    def n_jump_params(self) -> int:
        return {"none": 0, "discrete": 2 * self.n_shocks, "gamma": 3}[self.jump_family]

    @property
    def n_params(self) -> int:
        return 2 + self.n_jump_params + self.n_covariates + 2 * self.n_support

    def slices(self) -> dict[str, slice]:
        j = 2 + self.n_jump_params
        k = j + self.n_covariates
        v = k + self.n_support
        return {
            "psi": slice(0, j),
            "jumps": slice(2, j),
            "beta": slice(j, k),
            "support": slice(k, v),
            "masses": slice(v, v + self.n_support),
        }

    @property
    def normalized_index(self) -> int:
        return 0 if self.normalization == "drift" else 1


def structure_of(model: MhtModel) -> ModelStructure:
    jumps = model.exponent.jumps
    return ModelStructure(
        jump_family=model.exponent.family,
        n_shocks=len(jumps.rates) if isinstance(jumps, DiscreteShocks) else 0,
        n_support=len(model.mixing.support),
        n_covariates=model.n_covariates,
        normalization=model.normalization,
    )


def parameter_names(structure: ModelStructure, covariate_names: list[str] | None = None) -> list[str]:
    if structure.jump_family == "discrete":
        q = structure.n_shocks
        jump = [f"lambda_{i + 1}" for i in range(q)] + [f"nu_{i + 1}" for i in range(q)]
    elif structure.jump_family == "gamma":
        jump = ["lambda", "omega", "tau"]
    else:
        jump = []
    if covariate_names is not None and len(covariate_names) == structure.n_covariates:
        beta = [f"beta_{name}" for name in covariate_names]
    else:
        beta = [f"beta_{k + 1}" for k in range(structure.n_covariates)]
    support = [f"v_{l + 1}" for l in range(structure.n_support)]
    masses = [f"pi_{l + 1}" for l in range(structure.n_support)]
    return ["mu", "sigma", *jump, *beta, *support, *masses]


def default_free_mask(structure: ModelStructure) -> np.ndarray:
    """Every natural parameter except the normalised one."""
    mask = np.ones(structure.n_params, dtype=bool)
    mask[structure.normalized_index] = False
    return mask


def model_to_vector(model: MhtModel) -> np.ndarray:
    e = model.exponent
    jump = [] if e.jumps is None else e.jumps.param_values()
    return np.array(
        [e.mu, e.sigma, *jump, *model.link.beta, *model.mixing.support, *model.mixing.masses],
        dtype=float,
    )


def vector_to_model(theta, structure: ModelStructure) -> MhtModel:
    """Build a model from a natural-scale vector; inadmissible values raise InvalidArgumentError."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (structure.n_params,):
        raise InvalidArgumentError(
            f"expected {structure.n_params} parameters, got shape {theta.shape}"
        )
    sl = structure.slices()
    jump = theta[sl["jumps"]].tolist()
    try:
        if structure.jump_family == "discrete":
            q = structure.n_shocks
            jumps = DiscreteShocks(rates=tuple(jump[:q]), sizes=tuple(jump[q:]))
        elif structure.jump_family == "gamma":
            jumps = GammaShocks(rate=jump[0], scale=jump[1], shape=jump[2])
        else:
            jumps = None
        return MhtModel(
            exponent=LevyExponentSpec(mu=float(theta[0]), sigma=float(theta[1]), jumps=jumps),
            link=CovariateLink(beta=tuple(theta[sl["beta"]].tolist())),
            mixing=MixingDistribution(
                support=tuple(theta[sl["support"]].tolist()),
                masses=tuple(theta[sl["masses"]].tolist()),
            ),
            normalization=structure.normalization,
        )
    except ValidationError as exc:
        raise InvalidArgumentError(f"inadmissible parameters: {exc.errors()[0]['msg']}") from exc
