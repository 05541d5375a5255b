"""Closed forms for Brownian first passage times (inverse Gaussian law).

Survival terms are evaluated on the log scale:
    S = Phi(a1) - exp(k) Phi(a2),  a1 = (b - mu t)/(sigma sqrt t),
    a2 = -(b + mu t)/(sigma sqrt t),  k = 2 mu b / sigma^2,
with exp(k) Phi(a2) formed as exp(k + log Phi(a2)).
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import log_ndtr, logsumexp

from src.core.errors import InvalidArgumentError
from src.core.levy import threshold_eval
from src.core.models import Dataset, IgParams, MhtModel

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


def _check_times(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise InvalidArgumentError("durations must be finite and positive")
    return t


def log_density(t, barrier, mu, sigma):
    gap = barrier - mu * t
    return (
        np.log(barrier) - np.log(sigma) - 0.5 * (_LOG_2PI + 3.0 * np.log(t))
        - gap**2 / (2.0 * sigma**2 * t)
    )


def _survival_pieces(t, barrier, mu, sigma):
    st = sigma * np.sqrt(t)
    a1 = (barrier - mu * t) / st
    a2 = -(barrier + mu * t) / st
    k = 2.0 * mu * barrier / sigma**2
    log_first = log_ndtr(a1)
    log_second = k + log_ndtr(a2)
    diff = np.minimum(log_second - log_first, 0.0)
    log_s = log_first + np.log1p(-np.exp(diff))
    return a1, a2, k, log_second, log_s


def log_survival(t, barrier, mu, sigma):
    return _survival_pieces(t, barrier, mu, sigma)[-1]


def ig_density(p: IgParams, t):
    t = _check_times(t)
    value = np.exp(log_density(t, p.barrier, p.mu, p.sigma))
    return value.item() if value.ndim == 0 else value


def ig_survival(p: IgParams, t):
    t = _check_times(t)
    value = np.clip(np.exp(log_survival(t, p.barrier, p.mu, p.sigma)), 0.0, 1.0)
    return value.item() if value.ndim == 0 else value


def component_log_terms(t, complete, barrier, mu: float, sigma: float, gradient: bool = False):
    """Per-component log f (complete) or log S (censored) and their derivatives.

    ``t`` and ``complete`` have shape (N,), ``barrier`` has shape (N, L).
    Returns ``(log_g, dlog_db, dlog_dpsi)`` where ``dlog_dpsi[..., 0]`` is the
    derivative in mu and ``[..., 1]`` in sigma; derivatives are None unless
    ``gradient`` is set.
    """
    t = _check_times(t)[:, None]
    d = np.asarray(complete, dtype=bool)[:, None]
    b = np.asarray(barrier, dtype=float)
    a1, a2, k, log_second, log_s = _survival_pieces(t, b, mu, sigma)
    log_f = log_density(t, b, mu, sigma)
    log_g = np.where(d, log_f, log_s)
    if not gradient:
        return log_g, None, None

    sig2 = sigma**2
    gap = b - mu * t
    df_db = 1.0 / b - gap / (sig2 * t)
    df_dmu = gap / sig2
    df_dsigma = -1.0 / sigma + gap**2 / (sigma**3 * t)

    with np.errstate(over="ignore", invalid="ignore"):
        # phi(a1)/S and exp(k)Phi(a2)/S
        dens_ratio = np.exp(-0.5 * a1**2 - 0.5 * _LOG_2PI - log_s)
        tail_ratio = np.exp(log_second - log_s)
    st = sigma * np.sqrt(t)
    ds_db = 2.0 * dens_ratio / st - tail_ratio * 2.0 * mu / sig2
    ds_dmu = -tail_ratio * 2.0 * b / sig2
    ds_dsigma = dens_ratio * (a2 - a1) / sigma + tail_ratio * 2.0 * k / sigma

    dlog_db = np.where(d, df_db, ds_db)
    dlog_dpsi = np.stack(
        [np.where(d, df_dmu, ds_dmu), np.where(d, df_dsigma, ds_dsigma)], axis=-1
    )
    return log_g, dlog_db, dlog_dpsi


def barriers(model: MhtModel, covariates: np.ndarray) -> np.ndarray:
    """phi(x_n) v_l for every observation row and support point, shape (N, L)."""
    phi = np.atleast_1d(threshold_eval(model.link, covariates))
    return phi[:, None] * np.asarray(model.mixing.support)[None, :]


def mixed_ig_loglik(model: MhtModel, data: Dataset) -> float:
    """Censored log likelihood of a Brownian MHT model with discrete heterogeneity."""
    if model.exponent.jumps is not None:
        raise InvalidArgumentError("mixed_ig_loglik needs a model without jumps")
    log_g, _, _ = component_log_terms(
        data.durations(), data.complete(), barriers(model, data.covariates()),
        model.exponent.mu, model.exponent.sigma,
    )
    terms = logsumexp(log_g + np.log(model.mixing.masses), axis=1)
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        logger.warning("Zero likelihood at observations %s", bad.tolist())
        return float("-inf")
    return float(terms.sum())
