"""Laplace exponents of spectrally negative Levy processes and related transforms.

All evaluators accept scalars or numpy arrays (real or complex) and use the
principal branch for complex powers and square roots. Real input in the
closed right half-line gives real output.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import brentq

from src.core.errors import InvalidArgumentError, NumericalError, SingularityError
from src.core.models import CovariateLink, LevyExponentSpec, MhtModel, MixingDistribution

logger = logging.getLogger(__name__)

_ROOT_RTOL = 1e-14
_ROOT_MAXITER = 200


def _as_argument(s):
    arr = np.asarray(s)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"non-finite argument: {s!r}")
    if not np.isrealobj(arr):
        return arr.astype(complex)
    return arr.astype(float)


def _out(value, like):
    return value.item() if np.ndim(like) == 0 else value


def psi_eval(spec: LevyExponentSpec, s):
    """psi(s) = mu s + sigma^2 s^2 / 2 + jump part."""
    z = _as_argument(s)
    value = spec.mu * z + 0.5 * spec.sigma**2 * z**2
    if spec.jumps is not None:
        value = value + spec.jumps.exponent(z)
    return _out(np.asarray(value), s)


def psi_prime(spec: LevyExponentSpec, s):
    z = _as_argument(s)
    value = spec.mu + spec.sigma**2 * z
    if spec.jumps is not None:
        value = value + spec.jumps.exponent_prime(z)
    return _out(np.asarray(value), s)


def psi_second(spec: LevyExponentSpec, s):
    z = _as_argument(s)
    value = np.full_like(z, spec.sigma**2)
    if spec.jumps is not None:
        value = value + spec.jumps.exponent_second(z)
    return _out(np.asarray(value), s)


def _bm_root(s, mu: float, sigma: float):
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    z = _as_argument(s)
    return z, np.sqrt(mu * mu + 2.0 * sigma * sigma * z)


def lambda_bm(s, mu: float, sigma: float):
    """Inverse of the Brownian exponent: (sqrt(mu^2 + 2 sigma^2 s) - mu) / sigma^2."""
    z, root = _bm_root(s, mu, sigma)
    if mu > 0:
        # rationalised form, no cancellation for small |s|
        value = 2.0 * z / (root + mu)
    else:
        value = (root - mu) / sigma**2
    return _out(np.asarray(value), s)


def lambda_bm_prime(s, mu: float, sigma: float):
    _, root = _bm_root(s, mu, sigma)
    if np.any(root == 0):
        raise SingularityError(f"lambda_bm' has a branch point at mu^2 + 2 sigma^2 s = 0 (mu={mu})")
    return _out(np.asarray(1.0 / root), s)


def lambda_numeric(spec: LevyExponentSpec, s: float) -> float:
    """Largest real root of psi(z) = s, for real s >= 0.

    ``psi`` is convex and bounded by the Brownian exponent from above and by the
    Brownian exponent minus the total jump rate from below, which brackets the
    root between ``lambda_bm(s)`` and ``lambda_bm(s + total_rate)``.
    """
    s = float(s)
    if not np.isfinite(s) or s < 0:
        raise InvalidArgumentError(f"lambda_numeric needs a finite s >= 0, got {s}")
    mu, sigma = spec.mu, spec.sigma
    total_rate = 0.0 if spec.jumps is None else spec.jumps.total_rate
    lo = lambda_bm(s, mu, sigma)
    hi = lambda_bm(s + total_rate, mu, sigma)

    def gap(z: float) -> float:
        return psi_eval(spec, z) - s

    if spec.jumps is None or gap(lo) == 0.0:
        if s == 0.0 and psi_prime(spec, lo) < 0:
            lo = _descend_to_minimum(spec, lo, hi)
        else:
            return lo
    if gap(lo) >= 0.0:
        return lo
    if hi <= lo:
        hi = lo + 1.0
    while gap(hi) < 0.0:
        hi = 2.0 * hi
    try:
        root, info = brentq(
            gap, lo, hi, xtol=1e-300, rtol=_ROOT_RTOL, maxiter=_ROOT_MAXITER, full_output=True
        )
    except RuntimeError as exc:
        raise NumericalError(
            "lambda_numeric did not converge",
            {"s": s, "bracket": [lo, hi], "spec": spec.model_dump()},
        ) from exc
    if not info.converged:
        raise NumericalError(
            "lambda_numeric did not converge",
            {"s": s, "iterations": info.iterations, "flag": info.flag},
        )
    return float(root)


def _descend_to_minimum(spec: LevyExponentSpec, lo: float, hi: float) -> float:
    """Minimiser of psi on [lo, hi] when psi decreases at lo (defective case at s = 0)."""
    while psi_prime(spec, hi) <= 0:
        hi = 2.0 * hi + 1.0
    return float(brentq(lambda z: psi_prime(spec, z), lo, hi, rtol=_ROOT_RTOL, maxiter=_ROOT_MAXITER))


def mixing_lt(mix: MixingDistribution, z):
    """Laplace transform of the mixing distribution, sum_l pi_l exp(-z v_l)."""
    arr = np.asarray(z)
    v = np.asarray(mix.support)
    pi = np.asarray(mix.masses)
    value = (np.exp(-arr[..., None] * v) * pi).sum(axis=-1)
    return _out(np.asarray(value), z)


def threshold_eval(link: CovariateLink, x) -> float | np.ndarray:
    """phi(x) = exp(x'beta); ``x`` may be one row or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    beta = np.asarray(link.beta, dtype=float)
    if x.shape[-1:] != beta.shape and not (beta.size == 0 and x.size == 0):
        raise InvalidArgumentError(
            f"covariate dimension {x.shape[-1:]} does not match beta of length {beta.size}"
        )
    if beta.size == 0:
        value = np.ones(x.shape[:-1]) if x.ndim > 1 else np.asarray(1.0)
    else:
        value = np.exp(x @ beta)
    return _out(np.asarray(value), value)


def duration_lt(model: MhtModel, s: float, x) -> float:
    """E[exp(-sT) | X=x] = L[Lambda(s) phi(x)]."""
    lam = lambda_numeric(model.exponent, s)
    return float(mixing_lt(model.mixing, lam * threshold_eval(model.link, x)))


def mean_duration(model: MhtModel, x) -> float:
    """E[T | X=x] = phi(x) E[V] / psi'(0); infinite for defective models."""
    drift = psi_prime(model.exponent, 0.0)
    if drift <= 0:
        return float("inf")
    mean_v = float(np.dot(model.mixing.support, model.mixing.masses))
    return threshold_eval(model.link, x) * mean_v / drift
