"""Censored log likelihood of MHT models and its analytic gradient.

Complete durations contribute log f(t | x), censored ones log S(t | x). Gaussian
models use the inverse Gaussian closed forms unless the inverted path is
requested; every other model goes through the Euler inversion. Gradients are
taken in the natural parameters laid out by ``src.core.params``, with the mixture
masses treated as unconstrained.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from src.core.errors import InvalidArgumentError
from src.core.gaussian import barriers, component_log_terms
from src.core.inversion import clamp, invert_components
from src.core.levy import threshold_eval
from src.core.models import Dataset, InversionSettings, MhtModel
from src.core.params import default_free_mask, structure_of

logger = logging.getLogger(__name__)

Mode = Literal["auto", "closed_form", "inverted"]


@dataclass
class _Unique:
    t: np.ndarray
    complete: np.ndarray
    x: np.ndarray
    counts: np.ndarray


def _unique_rows(data: Dataset, model: MhtModel) -> _Unique:
    x = data.covariates()
    if x.shape[1] != model.n_covariates:
        raise InvalidArgumentError(
            f"data has {x.shape[1]} covariates, model expects {model.n_covariates}"
        )
    rows = np.column_stack([data.durations(), data.complete().astype(float), x])
    keys, counts = np.unique(rows, axis=0, return_counts=True)
    return _Unique(keys[:, 0], keys[:, 1] > 0.5, keys[:, 2:], counts)


def _resolve_mode(model: MhtModel, mode: Mode) -> Mode:
    if mode == "closed_form" and model.exponent.jumps is not None:
        raise InvalidArgumentError("closed_form mode needs a model without jumps")
    if mode == "auto":
        return "closed_form" if model.exponent.jumps is None else "inverted"
    return mode


@dataclass
class _Evaluation:
    log_terms: np.ndarray
    gradient: np.ndarray | None
    rows: _Unique


def _closed_form(model: MhtModel, rows: _Unique, gradient: bool):
    b = barriers(model, rows.x)
    log_g, dlog_db, dlog_dpsi = component_log_terms(
        rows.t, rows.complete, b, model.exponent.mu, model.exponent.sigma, gradient
    )
    log_mix = log_g + np.log(model.mixing.masses)
    ell = logsumexp(log_mix, axis=1)
    if not gradient:
        return ell, None
    with np.errstate(invalid="ignore"):
        resp = np.exp(log_mix - ell[:, None])
        ratio = np.exp(log_g - ell[:, None])
    d_psi = np.einsum("nl,nlp->np", resp, dlog_dpsi)
    d_b = resp * dlog_db
    return ell, (d_psi, d_b, ratio, b)


def _inverted(
    model: MhtModel, rows: _Unique, settings: InversionSettings, gradient: bool, checked: bool = True
):
    b = barriers(model, rows.x)
    pi = np.asarray(model.mixing.masses)
    n, n_comp = b.shape
    n_psi = len(model.exponent.param_names())
    value = np.zeros(n)
    g = np.zeros((n, n_comp))
    dg_db = np.zeros((n, n_comp))
    dg_dpsi = np.zeros((n, n_comp, n_psi))
    for kind, mask, upper in (("density", rows.complete, None), ("survival", ~rows.complete, 1.0)):
        if not mask.any():
            continue
        comp = invert_components(model.exponent, rows.t[mask], b[mask], kind, settings, gradient)
        mixed = comp.value @ pi
        error = np.abs((comp.value_next - comp.value) @ pi)
        value[mask] = clamp(mixed, error, 0.0, upper, kind, rows.t[mask]) if checked else mixed
        g[mask] = comp.value
        if gradient:
            dg_db[mask] = comp.d_barrier
            dg_dpsi[mask] = comp.d_psi
    with np.errstate(divide="ignore", invalid="ignore"):
        ell = np.log(value)
    if not gradient:
        return ell, None
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / value
    d_psi = np.einsum("l,nlp->np", pi, dg_dpsi) * inv[:, None]
    d_b = pi * dg_db * inv[:, None]
    ratio = g * inv[:, None]
    return ell, (d_psi, d_b, ratio, b)


def _evaluate(
    model: MhtModel, data: Dataset, settings: InversionSettings | None, mode: Mode, gradient: bool
) -> _Evaluation:
    settings = settings or InversionSettings()
    rows = _unique_rows(data, model)
    if _resolve_mode(model, mode) == "closed_form":
        ell, parts = _closed_form(model, rows, gradient)
    else:
        ell, parts = _inverted(model, rows, settings, gradient)
    if not gradient:
        return _Evaluation(ell, None, rows)

    d_psi, d_b, ratio, b = parts
    phi = np.atleast_1d(threshold_eval(model.link, rows.x))
    sl = structure_of(model).slices()
    w = rows.counts[:, None]
    grad = np.zeros(structure_of(model).n_params)
    grad[sl["psi"]] = (w * d_psi).sum(axis=0)
    grad[sl["beta"]] = (w * (d_b * b).sum(axis=1, keepdims=True) * rows.x).sum(axis=0)
    grad[sl["support"]] = (w * d_b * phi[:, None]).sum(axis=0)
    grad[sl["masses"]] = (w * ratio).sum(axis=0)
    return _Evaluation(ell, grad, rows)


def _total(ev: _Evaluation) -> float:
    bad = np.flatnonzero(~np.isfinite(ev.log_terms))
    if bad.size:
        logger.warning(
            "Zero likelihood at %d distinct observations, e.g. t=%s",
            bad.size, ev.rows.t[bad[:5]].tolist(),
        )
        return float("-inf")
    return float(np.dot(ev.rows.counts, ev.log_terms))


def loglik(
    model: MhtModel, data: Dataset, settings: InversionSettings | None = None, mode: Mode = "auto"
) -> float:
    return _total(_evaluate(model, data, settings, mode, gradient=False))


def contributions(
    model: MhtModel, data: Dataset, settings: InversionSettings | None = None, mode: Mode = "auto"
) -> np.ndarray:
    """Per-observation log f or log S, in data order."""
    ev = _evaluate(model, data, settings, mode, gradient=False)
    rows = np.column_stack([data.durations(), data.complete().astype(float), data.covariates()])
    keys = np.column_stack([ev.rows.t, ev.rows.complete.astype(float), ev.rows.x])
    lookup = {tuple(k): v for k, v in zip(keys.tolist(), ev.log_terms.tolist())}
    return np.array([lookup[tuple(r)] for r in rows.tolist()])


def loglik_and_gradient(
    model: MhtModel,
    data: Dataset,
    settings: InversionSettings | None = None,
    free=None,
    mode: Mode = "auto",
) -> tuple[float, np.ndarray]:
    ev = _evaluate(model, data, settings, mode, gradient=True)
    mask = default_free_mask(structure_of(model)) if free is None else np.asarray(free, dtype=bool)
    value = _total(ev)
    grad = ev.gradient[mask]
    if not np.isfinite(value):
        grad = np.full_like(grad, np.nan)
    return value, grad


def loglik_gradient(
    model: MhtModel,
    data: Dataset,
    settings: InversionSettings | None = None,
    free=None,
    mode: Mode = "auto",
) -> np.ndarray:
    """Gradient of ``loglik`` in the free natural parameters.

    ``free`` is a boolean mask over ``parameter_names``; it defaults to every
    parameter except the normalised one.
    """
    return loglik_and_gradient(model, data, settings, free, mode)[1]


def raw_inverted_loglik(
    model: MhtModel, data: Dataset, settings: InversionSettings | None = None
) -> float:
    """Inverted log likelihood straight from the Euler sums E_{R,M}.

    Nothing is clamped, so poorly converged sums show up as errors instead of
    being absorbed. NaN when some sum is not positive.
    """
    rows = _unique_rows(data, model)
    ell, _ = _inverted(model, rows, settings or InversionSettings(), gradient=False, checked=False)
    if not np.all(np.isfinite(ell)):
        return float("nan")
    return float(np.dot(rows.counts, ell))
