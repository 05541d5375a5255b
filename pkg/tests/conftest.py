from __future__ import annotations

import pytest

from src.core.models import (
    CovariateLink,
    DiscreteShocks,
    GammaShocks,
    LevyExponentSpec,
    MhtModel,
    MixingDistribution,
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: minute-scale Monte Carlo and reproduction checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def brownian() -> MhtModel:
    return MhtModel(exponent=LevyExponentSpec(mu=1.0, sigma=1.0))


@pytest.fixture
def gamma_model() -> MhtModel:
    """Standard Brownian motion minus mean-1/2 exponential jumps, thresholds 1 and 5."""
    return MhtModel(
        exponent=LevyExponentSpec(
            mu=1.0, sigma=1.0, jumps=GammaShocks(rate=1.0, scale=2.0, shape=1.0)
        ),
        mixing=MixingDistribution(support=(1.0, 5.0), masses=(0.7, 0.3)),
    )


@pytest.fixture
def discrete_model() -> MhtModel:
    return MhtModel(
        exponent=LevyExponentSpec(
            mu=1.0, sigma=0.9, jumps=DiscreteShocks(rates=(0.3, 0.2), sizes=(-1.1, -0.4))
        ),
        link=CovariateLink(beta=(0.4,)),
        mixing=MixingDistribution(support=(0.8, 2.0), masses=(0.45, 0.55)),
    )
