from src.core.estimate import FitOptions, FitResult, fit, format_fit_table, starting_values
from src.core.likelihood import loglik, loglik_gradient
from src.core.models import (
    CovariateLink,
    Dataset,
    DiscreteShocks,
    GammaShocks,
    InversionSettings,
    LevyExponentSpec,
    MhtModel,
    MixingDistribution,
    Observation,
    SimSpec,
)
from src.core.params import ModelStructure

__all__ = [
    "CovariateLink",
    "Dataset",
    "DiscreteShocks",
    "FitOptions",
    "FitResult",
    "GammaShocks",
    "InversionSettings",
    "LevyExponentSpec",
    "MhtModel",
    "MixingDistribution",
    "ModelStructure",
    "Observation",
    "SimSpec",
    "fit",
    "format_fit_table",
    "loglik",
    "loglik_gradient",
    "starting_values",
]
