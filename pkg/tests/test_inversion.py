import math
import time

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad

from src.core.errors import NumericalError
from src.core.gaussian import ig_density, ig_survival
from src.core.inversion import (
    density_integrand,
    euler_invert,
    euler_weights,
    invert_density,
    invert_components,
    invert_many,
    invert_survival,
    survival_integrand,
)
from src.core.levy import lambda_bm, lambda_numeric
from src.core.models import (
    DiscreteShocks,
    GammaShocks,
    IgParams,
    InversionSettings,
    LevyExponentSpec,
    MhtModel,
    MixingDistribution,
)

UNIT = IgParams(mu=1.0, sigma=1.0, barrier=1.0)
DEFAULTS = InversionSettings(c_over_t=11.0, h_times_t=1.0, R=9, M=25)


def test_default_settings():
    s = InversionSettings()
    assert (s.c_over_t, s.h_times_t, s.R, s.M) == (11.0, 1.0, 9, 25)
    assert s.n_nodes == 36


def test_euler_weights_structure():
    w = euler_weights(9, 25)
    assert w.shape == (2, 36)
    assert w[0, 0] == 1.0
    assert np.all(w[:, 1:10] == 2.0)
    assert w[0, -1] == 0.0
    assert w[1, -1] == pytest.approx(2.0 / 2.0**26)
    # binomial tails are nonincreasing past the R-th term
    assert np.all(np.diff(w[0, 10:]) <= 0)


# ── Integrands ────────────────────────────────────────────────


def test_brownian_integrands_collapse(brownian):
    t, s = 1.3, 5.0 + 2.0j
    z = lambda_bm(s, 1.0, 1.0)
    assert survival_integrand(brownian, [], t, s) == pytest.approx(np.exp(s * t) * (1 - np.exp(-z)) / s, rel=1e-12)
    assert density_integrand(brownian, [], t, s) == pytest.approx(np.exp(s * t) * np.exp(-z), rel=1e-12)


def _mp_integrands(t, s):
    mpmath.mp.dps = 40
    mu = sigma = tau = lam = mpmath.mpf(1)
    omega = mpmath.mpf(2)
    s = mpmath.mpc(s)
    root = mpmath.sqrt(mu**2 + 2 * sigma**2 * s)
    z = (root - mu) / sigma**2
    psi = mu * z + sigma**2 * z**2 / 2 + lam * ((1 + z / omega) ** (-tau) - 1)
    dpsi = mu + sigma**2 * z - lam * tau / omega * (1 + z / omega) ** (-tau - 1)
    lt = mpmath.mpf("0.7") * mpmath.exp(-z) + mpmath.mpf("0.3") * mpmath.exp(-5 * z)
    jac = dpsi / root
    growth = mpmath.exp(psi * t)
    return complex(growth * (1 - lt) / psi * jac), complex(growth * lt * jac)


@pytest.mark.parametrize("s", [11.0 + 1.0j, 11.0 + 7.0j, 11.0 + 30.0j])
def test_integrands_match_high_precision(gamma_model, s):
    surv, dens = _mp_integrands(1.0, s)
    assert survival_integrand(gamma_model, [], 1.0, s) == pytest.approx(surv, rel=1e-12)
    assert density_integrand(gamma_model, [], 1.0, s) == pytest.approx(dens, rel=1e-12)


def test_integrands_commute_with_conjugation(gamma_model):
    s = np.array([11.0 + 2.0j, 3.0 + 9.0j])
    for integrand in (survival_integrand, density_integrand):
        assert integrand(gamma_model, [], 2.0, np.conj(s)) == pytest.approx(np.conj(integrand(gamma_model, [], 2.0, s)))


# ── Inversion against closed forms ────────────────────────────


def test_euler_invert_brownian(brownian):
    surv = euler_invert("survival", brownian, [], 1.0, DEFAULTS)
    dens = euler_invert("density", brownian, [], 1.0, DEFAULTS)
    assert surv.value == pytest.approx(ig_survival(UNIT, 1.0), abs=1e-9)
    assert surv.value == pytest.approx(0.3319, abs=1e-4)
    assert dens.value == pytest.approx(0.398942, abs=1e-6)
    assert dens.value == pytest.approx(ig_density(UNIT, 1.0), abs=1e-9)
    assert surv.evaluations == dens.evaluations == 36
    assert 0 <= dens.error_estimate < 1e-6


def test_density_error_over_grid(brownian):
    t = np.geomspace(0.05, 20.0, 200)
    start = time.perf_counter()
    value, _ = invert_many(brownian, t, np.zeros((t.size, 0)), "density", DEFAULTS)
    assert time.perf_counter() - start < 1.0
    exact = ig_density(UNIT, t)
    err = np.abs(value - exact)
    resolved = exact >= 1e-10
    assert np.all(err[resolved] <= np.maximum(1e-9, 1e-10 / exact[resolved]))
    assert np.median(err * exact) <= 1e-10


@pytest.mark.parametrize("mu", [-1.0, 1.0])
@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("barrier", [0.5, 1.0, 5.0])
def test_brownian_oracle_grid(mu, sigma, barrier):
    t = np.geomspace(0.1, 10.0, 12)
    exponent = LevyExponentSpec(mu=mu, sigma=sigma)
    params = IgParams(mu=mu, sigma=sigma, barrier=barrier)
    b = np.full((t.size, 1), barrier)
    dens = invert_components(exponent, t, b, "density", DEFAULTS).value[:, 0]
    surv = invert_components(exponent, t, b, "survival", DEFAULTS).value[:, 0]
    exact = ig_density(params, t)
    with np.errstate(divide="ignore"):
        allowed = np.maximum(1e-8, 1e-9 / exact)
    assert np.all(np.abs(dens - exact) <= allowed)
    assert surv == pytest.approx(ig_survival(params, t), abs=1e-8)


def test_survival_near_zero(brownian):
    assert invert_survival(brownian, [], 1e-3, DEFAULTS) == pytest.approx(1.0, abs=1e-8)


def test_error_decays_with_euler_terms(brownian):
    t = np.linspace(0.5, 10.0, 40)
    exact = ig_density(UNIT, t)
    errors = []
    for m in (5, 10, 25):
        value, _ = invert_many(brownian, t, np.zeros((t.size, 0)), "density", DEFAULTS.model_copy(update={"M": m}))
        errors.append(np.mean(np.abs(value - exact)))
    assert errors[0] > errors[1]
    assert errors[2] < 1e-3 * errors[0]
    assert errors[2] < 1e-9


def test_mixture_inversion_matches_closed_form():
    model = MhtModel(
        exponent=LevyExponentSpec(mu=1.0, sigma=0.7),
        mixing=MixingDistribution(support=(0.5, 2.0), masses=(0.3, 0.7)),
    )
    for t in (0.4, 1.5, 3.0):
        exact = sum(
            p * ig_survival(IgParams(mu=1.0, sigma=0.7, barrier=v), t)
            for v, p in ((0.5, 0.3), (2.0, 0.7))
        )
        assert invert_survival(model, [], t, DEFAULTS) == pytest.approx(exact, abs=1e-8)


# ── Jump models ───────────────────────────────────────────────


def test_mass_conservation(gamma_model):
    s1 = invert_survival(gamma_model, [], 1.0, DEFAULTS)
    s2 = invert_survival(gamma_model, [], 2.0, DEFAULTS)
    integral, _ = quad(lambda t: invert_density(gamma_model, [], t, DEFAULTS), 1.0, 2.0, epsabs=1e-12)
    assert s1 - s2 == pytest.approx(integral, abs=1e-8)


@pytest.mark.parametrize(
    "name", ["brownian", "gamma_model", "discrete_model", "wide_gamma", "one_shock"]
)
def test_density_integrates_to_one(name, request):
    extra = {
        "wide_gamma": MhtModel(
            exponent=LevyExponentSpec(mu=1.0, sigma=0.7, jumps=GammaShocks(rate=0.5, scale=3.0, shape=2.0)),
            mixing=MixingDistribution(support=(0.8, 2.0), masses=(0.5, 0.5)),
        ),
        "one_shock": MhtModel(
            exponent=LevyExponentSpec(mu=1.0, sigma=1.2, jumps=DiscreteShocks(rates=(0.4,), sizes=(-1.5,))),
            mixing=MixingDistribution.point(1.5),
        ),
    }
    model = extra[name] if name in extra else request.getfixturevalue(name)
    x = [0.3] * model.n_covariates
    horizon = 10.0
    mass, _ = quad(lambda t: invert_density(model, x, t, DEFAULTS), 0.0, horizon, epsabs=1e-10, limit=200)
    assert mass + invert_survival(model, x, horizon, DEFAULTS) == pytest.approx(1.0, abs=1e-6)


def test_settings_invariance(gamma_model):
    other = InversionSettings(c_over_t=13.0, h_times_t=1.0, R=12, M=25)
    for t in (0.5, 1.0, 4.0):
        assert invert_density(gamma_model, [], t, other) == pytest.approx(
            invert_density(gamma_model, [], t, DEFAULTS), abs=1e-8
        )


def test_survival_limits(gamma_model):
    assert invert_survival(gamma_model, [], 1e-3, DEFAULTS) == pytest.approx(1.0, abs=1e-8)
    values = [invert_survival(gamma_model, [], t, DEFAULTS) for t in (0.5, 1.0, 2.0, 5.0, 20.0)]
    assert all(a >= b for a, b in zip(values, values[1:]))


DEFECTIVE = MhtModel(
    exponent=LevyExponentSpec(mu=1.0, sigma=1.0, jumps=DiscreteShocks(rates=(2.0,), sizes=(-1.0,)))
)


def test_defective_density_for_any_abscissa():
    # at t = 20 the default contour starts between the minimum and the largest root of psi
    wide = DEFAULTS.model_copy(update={"c_over_t": 13.0})
    for t in (5.0, 20.0, 30.0):
        value = invert_density(DEFECTIVE, [], t, DEFAULTS)
        assert value >= 0.0
        assert value == pytest.approx(invert_density(DEFECTIVE, [], t, wide), abs=1e-8)


def test_defective_survival_for_any_abscissa():
    wide = DEFAULTS.model_copy(update={"c_over_t": 17.0})
    for t in (5.0, 15.0):
        assert invert_survival(DEFECTIVE, [], t, DEFAULTS) == pytest.approx(
            invert_survival(DEFECTIVE, [], t, wide), abs=1e-7
        )


def test_defective_survival_levels_off_at_the_defect():
    defect = 1.0 - math.exp(-lambda_numeric(DEFECTIVE.exponent, 0.0))
    values = [invert_survival(DEFECTIVE, [], t, DEFAULTS) for t in (1.0, 5.0, 15.0, 50.0, 200.0)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(defect, abs=1e-6)
    assert values[-1] >= defect - 1e-8


def test_defective_brownian_survival_matches_closed_form():
    model = MhtModel(exponent=LevyExponentSpec(mu=-1.0, sigma=1.0), normalization="dispersion")
    params = IgParams(mu=-1.0, sigma=1.0, barrier=1.0)
    for t in (0.2, 1.0, 3.0, 10.0):
        assert invert_survival(model, [], t, DEFAULTS) == pytest.approx(ig_survival(params, t), abs=1e-8)
        assert invert_density(model, [], t, DEFAULTS) == pytest.approx(ig_density(params, t), abs=1e-8)


def test_overflow_reported(brownian):
    with pytest.raises(NumericalError) as info:
        euler_invert("density", brownian, [], 1.0, DEFAULTS.model_copy(update={"c_over_t": 800.0}))
    assert info.value.details()["t"] == [1.0]


@pytest.mark.slow
def test_throughput(gamma_model):
    t = np.geomspace(0.05, 20.0, 100_000)
    start = time.perf_counter()
    value, _ = invert_many(gamma_model, t, np.zeros((t.size, 0)), "density", DEFAULTS)
    assert np.all(np.isfinite(value))
    assert time.perf_counter() - start < 20.0
