"""Exact Monte Carlo draws of first passage times over mixed thresholds.

Between jumps the process is Brownian, so each inter-arrival window is handled
in closed form: the chance of passing inside the window comes from the inverse
Gaussian survival, the passage time from its truncated CDF, and otherwise the
window-end level from the normal law conditioned on staying below the barrier.
All paths of a batch advance together, one window per iteration.
"""

from __future__ import annotations

import logging

import numpy as np
from joblib import Parallel, delayed

from src.config import settings
from src.core.errors import InvalidArgumentError, NumericalError
from src.core.gaussian import log_survival
from src.core.levy import psi_prime, threshold_eval
from src.core.models import (
    DiscreteShocks,
    Dataset,
    LevyExponentSpec,
    MhtModel,
    SimSpec,
)

logger = logging.getLogger(__name__)

NO_PASSAGE = float("inf")


# ── Brownian pieces ───────────────────────────────────────────


def sample_ig_many(mu: float, sigma: float, barrier, rng: np.random.Generator) -> np.ndarray:
    """Inverse Gaussian draws by the Michael, Schucany and Haas transformation."""
    if not mu > 0:
        raise InvalidArgumentError(f"unconditional inverse Gaussian draws need mu > 0, got {mu}")
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    barrier = np.asarray(barrier, dtype=float)
    if np.any(barrier <= 0):
        raise InvalidArgumentError("barriers must be positive")
    mean = barrier / mu
    shape = barrier**2 / sigma**2
    y = rng.standard_normal(barrier.shape) ** 2
    # smaller root written without cancellation, tiny barriers included
    a = mean * y / (2.0 * shape)
    x = mean / (1.0 + a + np.sqrt(a * (a + 2.0)))
    u = rng.uniform(size=barrier.shape)
    return np.where(u <= mean / (mean + x), x, mean**2 / x)


def sample_ig(mu: float, sigma: float, barrier: float, rng: np.random.Generator) -> float:
    return float(sample_ig_many(mu, sigma, np.array([barrier]), rng)[0])


def _brownian_passage(mu: float, sigma: float, barrier: np.ndarray, rng) -> np.ndarray:
    """Passage times without jumps for any drift; NO_PASSAGE on the defect."""
    if mu > 0:
        return sample_ig_many(mu, sigma, barrier, rng)
    if mu == 0:
        z = rng.standard_normal(barrier.shape)
        return (barrier / sigma) ** 2 / z**2
    # given passage, the hitting time is inverse Gaussian with drift |mu|
    passes = rng.uniform(size=barrier.shape) < np.exp(2.0 * mu * barrier / sigma**2)
    times = sample_ig_many(-mu, sigma, barrier, rng)
    return np.where(passes, times, NO_PASSAGE)


def _crossing_cdf(tau, gap, mu, sigma):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(tau > 0, -np.expm1(log_survival(np.maximum(tau, 1e-300), gap, mu, sigma)), 0.0)


def _truncated_crossing_time(window, gap, mu, sigma, rng) -> np.ndarray:
    """Passage time conditioned to fall inside (0, window), by bisection on the CDF."""
    target = rng.uniform(size=window.shape) * _crossing_cdf(window, gap, mu, sigma)
    lo, hi = np.zeros_like(window), window.copy()
    tol = settings.sim_bisection_tol
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        below = _crossing_cdf(mid, gap, mu, sigma) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _endpoint_without_crossing(window, gap, mu, sigma, rng) -> np.ndarray:
    """Level at the end of the window given the path stayed below ``gap``."""
    out = np.empty_like(window)
    pending = np.arange(window.size)
    while pending.size:
        w, g = window[pending], gap[pending]
        x = mu * w + sigma * np.sqrt(w) * rng.standard_normal(pending.size)
        with np.errstate(over="ignore"):
            keep = (x < g) & (rng.uniform(size=pending.size) < -np.expm1(-2.0 * g * (g - x) / (sigma**2 * w)))
        out[pending[keep]] = x[keep]
        pending = pending[~keep]
    return out


def _jump_magnitudes(exponent: LevyExponentSpec, n: int, rng) -> np.ndarray:
    jumps = exponent.jumps
    if isinstance(jumps, DiscreteShocks):
        rates = np.asarray(jumps.rates)
        pick = rng.choice(rates.size, size=n, p=rates / rates.sum())
        return -np.asarray(jumps.sizes)[pick]
    return rng.gamma(jumps.shape, 1.0 / jumps.scale, size=n)


# ── First passage ─────────────────────────────────────────────


def first_passage_times(model: MhtModel, barrier, rng: np.random.Generator) -> np.ndarray:
    """Passage times of mu t + sigma W(t) - jumps over each barrier.

    Paths still running past ``settings.sim_horizon`` get NO_PASSAGE; that
    can only happen when psi'(0) <= 0.
    """
    e = model.exponent
    barrier = np.atleast_1d(np.asarray(barrier, dtype=float))
    if np.any(~np.isfinite(barrier)) or np.any(barrier <= 0):
        raise InvalidArgumentError("barriers must be finite and positive")
    horizon = settings.sim_horizon
    if e.jumps is None:
        times = _brownian_passage(e.mu, e.sigma, barrier, rng)
        return np.where(times > horizon, NO_PASSAGE, times)

    rate = e.jumps.total_rate
    gap = barrier.copy()
    elapsed = np.zeros_like(barrier)
    result = np.full_like(barrier, NO_PASSAGE)
    active = np.arange(barrier.size)
    while active.size:
        g = gap[active]
        window = rng.exponential(1.0 / rate, size=active.size)
        crossed = rng.uniform(size=active.size) < _crossing_cdf(window, g, e.mu, e.sigma)

        idx = active[crossed]
        result[idx] = elapsed[idx] + _truncated_crossing_time(
            window[crossed], g[crossed], e.mu, e.sigma, rng
        )

        stay = ~crossed
        idx = active[stay]
        level = _endpoint_without_crossing(window[stay], g[stay], e.mu, e.sigma, rng)
        gap[idx] = g[stay] - level + _jump_magnitudes(e, idx.size, rng)
        elapsed[idx] += window[stay]
        active = idx[elapsed[idx] <= horizon]
        if active.size < idx.size and psi_prime(e, 0.0) > 0:
            raise NumericalError(
                "simulation horizon exhausted although the process drifts to the barrier",
                {"horizon": horizon, "paths": int(idx.size - active.size)},
            )
    return result


def sample_first_passage(model: MhtModel, barrier: float, rng: np.random.Generator) -> float:
    return float(first_passage_times(model, np.array([barrier]), rng)[0])


# ── Datasets ──────────────────────────────────────────────────


def _batch(spec: SimSpec, n: int, seed: np.random.SeedSequence, source: np.ndarray | None):
    rng = np.random.default_rng(seed)
    model = spec.model
    k = model.n_covariates
    if source is None:
        x = np.zeros((n, k))
    else:
        x = source[rng.integers(0, source.shape[0], size=n)]
    pick = rng.choice(len(model.mixing.masses), size=n, p=np.asarray(model.mixing.masses))
    v = np.asarray(model.mixing.support)[pick]
    phi = np.atleast_1d(threshold_eval(model.link, x)) if k else np.ones(n)
    t = first_passage_times(model, phi * v, rng)

    c = spec.censoring
    if c.kind == "fixed":
        limit = np.full(n, c.value)
    elif c.kind == "exponential":
        limit = rng.exponential(1.0 / c.value, size=n)
    else:
        limit = np.full(n, np.inf)
    never = ~np.isfinite(t) & ~np.isfinite(limit)
    limit = np.where(never, settings.sim_horizon, limit)
    return np.minimum(t, limit), t <= limit, x, int(never.sum())


def simulate_arrays(spec: SimSpec, n_jobs: int | None = None):
    """Durations, completion flags and covariate rows of ``spec.n_draws`` draws.

    Batches get independent streams spawned from ``spec.seed`` and are
    concatenated in batch order, so results do not depend on ``n_jobs``.
    """
    k = spec.model.n_covariates
    source = None
    if spec.covariate_source is not None:
        source = np.asarray(spec.covariate_source, dtype=float).reshape(-1, k)
        if source.shape[0] == 0:
            raise InvalidArgumentError("covariate_source is empty")
    size = settings.sim_batch_size
    counts = [min(size, spec.n_draws - i) for i in range(0, spec.n_draws, size)]
    streams = np.random.SeedSequence(spec.seed).spawn(len(counts))
    batches = Parallel(n_jobs=n_jobs or settings.n_jobs)(
        delayed(_batch)(spec, n, s, source) for n, s in zip(counts, streams)
    )
    t = np.concatenate([b[0] for b in batches])
    d = np.concatenate([b[1] for b in batches])
    x = np.concatenate([b[2] for b in batches])
    never = sum(b[3] for b in batches)
    if never:
        logger.warning("%d paths never reached their threshold; censored at %g", never, settings.sim_horizon)
    logger.info("Simulated %d durations in %d batch(es), %d censored", t.size, len(counts), int((~d).sum()))
    return t, d, x


def simulate_dataset(spec: SimSpec) -> Dataset:
    t, d, x = simulate_arrays(spec)
    names = spec.covariate_names or [f"x{j + 1}" for j in range(spec.model.n_covariates)]
    if len(names) != spec.model.n_covariates:
        raise InvalidArgumentError(
            f"{len(names)} covariate names for {spec.model.n_covariates} covariates"
        )
    return Dataset.from_arrays(t, d, x, names)
