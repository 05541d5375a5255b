import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.errors import InvalidArgumentError, SingularityError
from src.core.levy import (
    duration_lt,
    lambda_bm,
    lambda_bm_prime,
    lambda_numeric,
    mean_duration,
    mixing_lt,
    psi_eval,
    psi_prime,
    psi_second,
    threshold_eval,
)
from src.core.models import (
    CovariateLink,
    DiscreteShocks,
    GammaShocks,
    LevyExponentSpec,
    MhtModel,
    MixingDistribution,
)

BM = LevyExponentSpec(mu=1.0, sigma=1.0)
ONE_SHOCK = LevyExponentSpec(mu=1.0, sigma=1.0, jumps=DiscreteShocks(rates=(1.0,), sizes=(-1.0,)))
GAMMA = LevyExponentSpec(mu=1.0, sigma=1.0, jumps=GammaShocks(rate=1.0, scale=2.0, shape=1.0))


# ── psi ───────────────────────────────────────────────────────


def test_psi_brownian():
    assert psi_eval(BM, 2.0) == pytest.approx(4.0)


@pytest.mark.parametrize("spec", [BM, ONE_SHOCK, GAMMA])
def test_psi_vanishes_at_zero(spec):
    assert psi_eval(spec, 0.0) == 0.0


def test_psi_discrete_shock():
    assert psi_eval(ONE_SHOCK, 1.0) == pytest.approx(1.5 + math.exp(-1.0) - 1.0, rel=1e-12)
    assert psi_eval(ONE_SHOCK, 1.0) == pytest.approx(0.867879, abs=1e-6)


def test_psi_prime_examples():
    assert psi_prime(BM, 3.0) == pytest.approx(4.0)
    assert psi_prime(ONE_SHOCK, 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("spec", [BM, ONE_SHOCK, GAMMA])
@pytest.mark.parametrize("s", [0.3, 1.0, 4.5])
def test_psi_derivatives_match_finite_differences(spec, s):
    h = 1e-6
    fd = (psi_eval(spec, s + h) - psi_eval(spec, s - h)) / (2 * h)
    assert psi_prime(spec, s) == pytest.approx(fd, rel=1e-6)
    fd2 = (psi_prime(spec, s + h) - psi_prime(spec, s - h)) / (2 * h)
    assert psi_second(spec, s) == pytest.approx(fd2, rel=1e-6)


def test_psi_complex_conjugation():
    s = 2.0 + 3.0j
    assert psi_eval(GAMMA, np.conj(s)) == pytest.approx(np.conj(psi_eval(GAMMA, s)))


def test_psi_rejects_non_finite():
    with pytest.raises(InvalidArgumentError):
        psi_eval(BM, float("nan"))


def test_gamma_exponent_survives_huge_shape():
    spec = LevyExponentSpec(mu=1.0, sigma=1.0, jumps=GammaShocks(rate=1.0, scale=1.0, shape=1e6))
    assert np.isfinite(psi_eval(spec, 10.0))
    assert psi_eval(spec, 10.0) == pytest.approx(10.0 + 50.0 - 1.0)


# ── Lambda_BM ─────────────────────────────────────────────────


def test_lambda_bm_examples():
    assert lambda_bm(0.0, 1.0, 1.0) == 0.0
    assert lambda_bm(0.0, -1.0, 1.0) == pytest.approx(2.0)
    assert lambda_bm(4.0, 1.0, math.sqrt(2.0)) == pytest.approx((math.sqrt(17.0) - 1.0) / 2.0, rel=1e-12)
    assert lambda_bm(4.0, 1.0, math.sqrt(2.0)) == pytest.approx(1.561553, abs=1e-6)


def test_lambda_bm_inverts_brownian_exponent():
    s = np.array([0.1, 1.0, 7.0, 11.0 + 4.0j])
    for mu in (1.0, -0.5):
        spec = LevyExponentSpec(mu=mu, sigma=0.7)
        assert psi_eval(spec, lambda_bm(s, mu, 0.7)) == pytest.approx(s, rel=1e-12)


def test_lambda_bm_rejects_nonpositive_sigma():
    with pytest.raises(InvalidArgumentError):
        lambda_bm(1.0, 1.0, 0.0)


def test_lambda_bm_prime_examples():
    assert lambda_bm_prime(0.0, 1.0, 1.0) == pytest.approx(1.0)
    assert lambda_bm_prime(4.0, 1.0, math.sqrt(2.0)) == pytest.approx(1.0 / math.sqrt(17.0))
    assert lambda_bm_prime(4.0, 1.0, math.sqrt(2.0)) == pytest.approx(0.242536, abs=1e-6)


@pytest.mark.parametrize("s", [0.2, 1.0, 3.0, 12.0])
def test_lambda_bm_prime_matches_finite_differences(s):
    h = 1e-6
    fd = (lambda_bm(s + h, 1.0, 1.3) - lambda_bm(s - h, 1.0, 1.3)) / (2 * h)
    assert lambda_bm_prime(s, 1.0, 1.3) == pytest.approx(fd, rel=1e-7)


def test_lambda_bm_prime_branch_point():
    with pytest.raises(SingularityError):
        lambda_bm_prime(-0.5, 1.0, 1.0)


# ── Lambda (numeric) ──────────────────────────────────────────


def test_lambda_numeric_agrees_with_brownian_closed_form():
    assert lambda_numeric(BM, 4.0) == pytest.approx(2.0, rel=1e-12)


def test_lambda_numeric_zero_when_drift_is_positive():
    spec = LevyExponentSpec(mu=1.0, sigma=1.0, jumps=DiscreteShocks(rates=(0.5,), sizes=(-1.0,)))
    assert lambda_numeric(spec, 0.0) == 0.0


def test_lambda_numeric_discrete_shock_root():
    root = lambda_numeric(ONE_SHOCK, 1.0)
    assert root > 0
    assert root + root**2 / 2 + math.exp(-root) - 1.0 == pytest.approx(1.0, abs=1e-12)
    # largest root sits between the Brownian bounds
    assert lambda_bm(1.0, 1.0, 1.0) <= root <= lambda_bm(2.0, 1.0, 1.0)


def test_lambda_numeric_defective_process():
    spec = LevyExponentSpec(mu=1.0, sigma=1.0, jumps=DiscreteShocks(rates=(2.0,), sizes=(-1.0,)))
    root = lambda_numeric(spec, 0.0)
    assert root > 0.5
    assert psi_eval(spec, root) == pytest.approx(0.0, abs=1e-12)
    assert psi_prime(spec, root) > 0


def test_lambda_numeric_rejects_negative_s():
    with pytest.raises(InvalidArgumentError):
        lambda_numeric(BM, -1.0)


# ── Mixing, link, duration transform ──────────────────────────


def test_mixing_lt_examples():
    assert mixing_lt(MixingDistribution.point(1.0), 1.0) == pytest.approx(math.exp(-1.0))
    mix = MixingDistribution(support=(1.0, 5.0), masses=(0.7, 0.3))
    assert mixing_lt(mix, 0.0) == pytest.approx(1.0)
    assert mixing_lt(mix, 0.5) == pytest.approx(0.7 * math.exp(-0.5) + 0.3 * math.exp(-2.5))
    assert mixing_lt(mix, 0.5) == pytest.approx(0.449197, abs=1e-6)


def test_mixing_validation():
    with pytest.raises(ValidationError):
        MixingDistribution(support=(2.0, 1.0), masses=(0.5, 0.5))
    with pytest.raises(ValidationError):
        MixingDistribution(support=(1.0, 2.0), masses=(0.5, 0.6))


def test_threshold_eval_examples():
    assert threshold_eval(CovariateLink(beta=(0.0, 0.0)), [3.0, -2.0]) == 1.0
    assert threshold_eval(CovariateLink(beta=(-0.8669,)), [0.0]) == 1.0
    assert threshold_eval(CovariateLink(beta=(2.0,)), [0.5]) == pytest.approx(math.e)


def test_threshold_eval_matrix_and_mismatch():
    link = CovariateLink(beta=(1.0, -1.0))
    rows = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0]])
    assert threshold_eval(link, rows) == pytest.approx([1.0, 1.0, math.e])
    with pytest.raises(InvalidArgumentError):
        threshold_eval(link, [1.0])


def test_duration_lt_examples(brownian):
    assert duration_lt(brownian, 0.0, []) == pytest.approx(1.0)
    assert duration_lt(brownian, 4.0, []) == pytest.approx(math.exp(-2.0))
    defective = MhtModel(exponent=LevyExponentSpec(mu=-1.0, sigma=1.0), normalization="dispersion")
    assert duration_lt(defective, 0.0, []) == pytest.approx(math.exp(-2.0))


def test_mean_duration(brownian, discrete_model):
    model = brownian.model_copy(update={"mixing": MixingDistribution.point(2.0)})
    assert mean_duration(model, []) == pytest.approx(2.0)
    e_v = 0.45 * 0.8 + 0.55 * 2.0
    drift = 1.0 - 0.3 * 1.1 - 0.2 * 0.4
    assert mean_duration(discrete_model, [0.5]) == pytest.approx(math.exp(0.2) * e_v / drift)
    defective = MhtModel(exponent=LevyExponentSpec(mu=-1.0, sigma=1.0), normalization="dispersion")
    assert mean_duration(defective, []) == math.inf


def test_model_normalization_enforced():
    with pytest.raises(ValidationError):
        MhtModel(exponent=LevyExponentSpec(mu=2.0, sigma=1.0))
    with pytest.raises(ValidationError):
        MhtModel(exponent=LevyExponentSpec(mu=2.0, sigma=1.5), normalization="dispersion")


# ── Properties ────────────────────────────────────────────────

DEFECTIVE = LevyExponentSpec(mu=1.0, sigma=1.0, jumps=DiscreteShocks(rates=(2.0,), sizes=(-1.0,)))


@pytest.mark.parametrize("spec", [BM, ONE_SHOCK, GAMMA, DEFECTIVE])
def test_lambda_numeric_round_trip(spec):
    for s in np.linspace(0.0, 100.0, 41):
        assert abs(psi_eval(spec, lambda_numeric(spec, s)) - s) <= 1e-10 * max(1.0, s)


@pytest.mark.parametrize("spec", [BM, ONE_SHOCK, GAMMA, DEFECTIVE])
def test_psi_is_convex_on_the_real_axis(spec):
    s = np.linspace(0.0, 5.0, 201)
    values = np.array([psi_eval(spec, v) for v in s])
    assert np.all(np.diff(values, n=2) > 0)


@pytest.mark.parametrize(
    "mix",
    [
        MixingDistribution(support=(1.0, 5.0), masses=(0.7, 0.3)),
        MixingDistribution(support=(0.3, 1.1, 2.5), masses=(0.2, 0.5, 0.3)),
    ],
)
def test_mixing_lt_is_completely_monotone(mix):
    values = mixing_lt(mix, np.linspace(0.0, 4.0, 41))
    assert np.all(values > 0)
    for k in range(1, 5):
        assert np.all((-1) ** k * np.diff(values, n=k) >= 0), k
