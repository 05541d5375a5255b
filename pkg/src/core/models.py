from __future__ import annotations

import math
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import settings


def _finite(values, name: str) -> None:
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"{name} must be finite")


# ── Laplace exponent ──────────────────────────────────────────


class DiscreteShocks(BaseModel):
    """Compound Poisson shocks with finitely many negative sizes.

    Shocks of size ``sizes[q]`` arrive at Poisson rate ``rates[q]``.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["discrete"] = "discrete"
    rates: tuple[float, ...]
    sizes: tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> DiscreteShocks:
        if not self.rates or len(self.rates) != len(self.sizes):
            raise ValueError("rates and sizes must be nonempty and of equal length")
        _finite(self.rates, "rates")
        _finite(self.sizes, "sizes")
        if any(r <= 0 for r in self.rates):
            raise ValueError("shock rates must be positive")
        if any(v >= 0 for v in self.sizes):
            raise ValueError("shock sizes must be negative")
        if any(a >= b for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("shock sizes must be strictly increasing")
        return self

    @property
    def total_rate(self) -> float:
        return float(sum(self.rates))

    def param_names(self) -> list[str]:
        q = len(self.rates)
        return [f"lambda_{i + 1}" for i in range(q)] + [f"nu_{i + 1}" for i in range(q)]

    def param_values(self) -> list[float]:
        return list(self.rates) + list(self.sizes)

    def _growth(self, z):
        z = np.asarray(z)[..., None]
        nu = np.asarray(self.sizes)
        return z, nu, np.exp(z * nu)

    def exponent(self, z):
        _, _, e = self._growth(z)
        return ((e - 1.0) * np.asarray(self.rates)).sum(axis=-1)

    def exponent_prime(self, z):
        _, nu, e = self._growth(z)
        return (e * (np.asarray(self.rates) * nu)).sum(axis=-1)

    def exponent_second(self, z):
        _, nu, e = self._growth(z)
        return (e * (np.asarray(self.rates) * nu**2)).sum(axis=-1)

    def partials(self, z):
        """Parameter derivatives of the jump part of psi and psi'.

        Returns two arrays of shape ``z.shape + (2Q,)`` ordered as
        ``param_names()``.
        """
        zz, nu, e = self._growth(z)
        lam = np.asarray(self.rates)
        d_exp = np.concatenate([e - 1.0, lam * zz * e], axis=-1)
        d_prime = np.concatenate([nu * e, lam * e * (1.0 + zz * nu)], axis=-1)
        return d_exp, d_prime


class GammaShocks(BaseModel):
    """Compound Poisson shocks with gamma distributed sizes.

    Shock magnitudes have density proportional to ``y**(shape-1) exp(-scale*y)``,
    so their mean is ``shape / scale``.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["gamma"] = "gamma"
    rate: float = Field(gt=0)
    scale: float = Field(gt=0)
    shape: float = Field(gt=0)

    @model_validator(mode="after")
    def _check(self) -> GammaShocks:
        _finite((self.rate, self.scale, self.shape), "gamma shock parameters")
        return self

    @property
    def total_rate(self) -> float:
        return self.rate

    def param_names(self) -> list[str]:
        return ["lambda", "omega", "tau"]

    def param_values(self) -> list[float]:
        return [self.rate, self.scale, self.shape]

    # u**-p evaluated as exp(-p log1p(z/omega)) so huge shapes stay finite
    def _power(self, z, p: float):
        return np.exp(-p * np.log1p(np.asarray(z) / self.scale))

    def exponent(self, z):
        return self.rate * (self._power(z, self.shape) - 1.0)

    def exponent_prime(self, z):
        return -(self.rate * self.shape / self.scale) * self._power(z, self.shape + 1.0)

    def exponent_second(self, z):
        lam, om, tau = self.rate, self.scale, self.shape
        return lam * tau * (tau + 1.0) / om**2 * self._power(z, tau + 2.0)

    def partials(self, z):
        z = np.asarray(z)
        lam, om, tau = self.rate, self.scale, self.shape
        log_u = np.log1p(z / om)
        p0 = np.exp(-tau * log_u)
        p1 = np.exp(-(tau + 1.0) * log_u)
        p2 = np.exp(-(tau + 2.0) * log_u)
        d_exp = np.stack(
            [p0 - 1.0, lam * tau * z * p1 / om**2, -lam * p0 * log_u], axis=-1
        )
        d_prime = np.stack(
            [
                -(tau / om) * p1,
                (lam * tau / om**2) * p2 * (1.0 - tau * z / om),
                -(lam / om) * p1 * (1.0 - tau * log_u),
            ],
            axis=-1,
        )
        return d_exp, d_prime


JumpSpec = Annotated[DiscreteShocks | GammaShocks, Field(discriminator="kind")]


class LevyExponentSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: float
    sigma: float = Field(gt=0)
    jumps: JumpSpec | None = None

    @model_validator(mode="after")
    def _check(self) -> LevyExponentSpec:
        _finite((self.mu, self.sigma), "mu and sigma")
        return self

    @property
    def family(self) -> str:
        return "none" if self.jumps is None else self.jumps.kind

    def param_names(self) -> list[str]:
        jump_names = [] if self.jumps is None else self.jumps.param_names()
        return ["mu", "sigma"] + jump_names


# ── Heterogeneity and covariates ──────────────────────────────


class MixingDistribution(BaseModel):
    """Discrete distribution of the unobserved threshold factor V."""

    model_config = ConfigDict(frozen=True)

    support: tuple[float, ...]
    masses: tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> MixingDistribution:
        if not self.support or len(self.support) != len(self.masses):
            raise ValueError("support and masses must be nonempty and of equal length")
        _finite(self.support, "support")
        _finite(self.masses, "masses")
        if any(v <= 0 for v in self.support):
            raise ValueError("support points must be positive")
        if any(a >= b for a, b in zip(self.support, self.support[1:])):
            raise ValueError("support points must be strictly increasing")
        if any(p <= 0 or p > 1 for p in self.masses):
            raise ValueError("masses must lie in (0, 1]")
        if abs(math.fsum(self.masses) - 1.0) > 1e-12:
            raise ValueError("masses must sum to one")
        return self

    @classmethod
    def point(cls, v: float) -> MixingDistribution:
        return cls(support=(v,), masses=(1.0,))


class CovariateLink(BaseModel):
    """Loglinear threshold link phi(x) = exp(x'beta)."""

    model_config = ConfigDict(frozen=True)

    beta: tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> CovariateLink:
        _finite(self.beta, "beta")
        return self


Normalization = Literal["drift", "dispersion"]


class MhtModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    exponent: LevyExponentSpec
    link: CovariateLink = CovariateLink()
    mixing: MixingDistribution = MixingDistribution.point(1.0)
    normalization: Normalization = "drift"

    @model_validator(mode="after")
    def _check(self) -> MhtModel:
        if self.normalization == "drift" and self.exponent.mu != 1.0:
            raise ValueError("drift normalization requires mu = 1")
        if self.normalization == "dispersion" and self.exponent.sigma != 1.0:
            raise ValueError("dispersion normalization requires sigma = 1")
        return self

    @property
    def n_covariates(self) -> int:
        return len(self.link.beta)


class IgParams(BaseModel):
    """Inverse Gaussian first passage law of mu*t + sigma*W(t) over ``barrier``."""

    model_config = ConfigDict(frozen=True)

    mu: float
    sigma: float = Field(gt=0)
    barrier: float = Field(gt=0)


# ── Inversion ─────────────────────────────────────────────────


class InversionSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    c_over_t: float = Field(default_factory=lambda: settings.c_over_t, gt=0)
    h_times_t: float = Field(default_factory=lambda: settings.h_times_t, gt=0)
    R: int = Field(default_factory=lambda: settings.inversion_r, ge=1)
    M: int = Field(default_factory=lambda: settings.inversion_m, ge=1)

    @property
    def n_nodes(self) -> int:
        """Half-contour nodes r = 0..R+M+1 needed for E_{R,M} and E_{R,M+1}."""
        return self.R + self.M + 2


class InversionResult(BaseModel):
    value: float
    error_estimate: float = Field(ge=0)
    evaluations: int


# ── Data ──────────────────────────────────────────────────────


class Observation(BaseModel):
    model_config = ConfigDict(frozen=True)

    duration: float = Field(gt=0)
    complete: bool = True
    covariates: tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> Observation:
        _finite((self.duration, *self.covariates), "observation values")
        return self


class Dataset(BaseModel):
    observations: list[Observation] = Field(min_length=1)
    covariate_names: list[str] = []

    @model_validator(mode="after")
    def _check(self) -> Dataset:
        k = len(self.covariate_names)
        for i, obs in enumerate(self.observations):
            if len(obs.covariates) != k:
                raise ValueError(
                    f"observation {i} has {len(obs.covariates)} covariates, expected {k}"
                )
        return self

    def __len__(self) -> int:
        return len(self.observations)

    @classmethod
    def from_arrays(
        cls,
        durations,
        complete=None,
        covariates=None,
        covariate_names: list[str] | None = None,
    ) -> Dataset:
        durations = np.asarray(durations, dtype=float)
        n = durations.shape[0]
        complete = np.ones(n, dtype=bool) if complete is None else np.asarray(complete, dtype=bool)
        if covariates is None:
            covariates = np.zeros((n, len(covariate_names or [])))
        covariates = np.asarray(covariates, dtype=float).reshape(n, -1)
        names = covariate_names if covariate_names is not None else [
            f"x{j + 1}" for j in range(covariates.shape[1])
        ]
        return cls(
            observations=[
                Observation(
                    duration=float(t), complete=bool(d), covariates=tuple(float(v) for v in x)
                )
                for t, d, x in zip(durations, complete, covariates)
            ],
            covariate_names=list(names),
        )

    def durations(self) -> np.ndarray:
        return np.array([o.duration for o in self.observations])

    def complete(self) -> np.ndarray:
        return np.array([o.complete for o in self.observations], dtype=bool)

    def covariates(self) -> np.ndarray:
        return np.array(
            [o.covariates for o in self.observations], dtype=float
        ).reshape(len(self.observations), len(self.covariate_names))

    def subset(self, indices) -> Dataset:
        return Dataset(
            observations=[self.observations[i] for i in indices],
            covariate_names=list(self.covariate_names),
        )


# ── Simulation ────────────────────────────────────────────────


class CensoringSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["none", "fixed", "exponential"] = "none"
    value: float | None = None

    @model_validator(mode="after")
    def _check(self) -> CensoringSpec:
        if self.kind != "none" and (self.value is None or not self.value > 0):
            raise ValueError(f"{self.kind} censoring needs a positive value")
        return self


class SimSpec(BaseModel):
    model: MhtModel
    n_draws: int = Field(gt=0)
    seed: int = 0
    censoring: CensoringSpec = CensoringSpec()
    covariate_source: list[tuple[float, ...]] | None = None
    covariate_names: list[str] | None = None
