"""Maximum likelihood estimation of MHT models.

The optimiser works on an unconstrained vector eta:

    sigma, lambda, omega, tau        log
    nu_1 < ... < nu_Q < 0            nu_q = -sum_{k >= q} exp(eta_k)
    0 < v_1 < ... < v_L              v_l = sum_{k <= l} exp(eta_k)
    pi on the simplex                softmax of Helmert-rotated coordinates
    beta (and mu under sigma = 1)    identity

Standard errors come from a central-difference Hessian of the analytic
gradient in eta, mapped to natural parameters by the delta method.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import helmert
from scipy.optimize import minimize
from scipy.special import softmax

from src.config import settings as app_settings
from src.core.errors import InvalidArgumentError, MhtError, NumericalError
from src.core.likelihood import Mode, loglik_and_gradient
from src.core.models import Dataset, InversionSettings, MhtModel
from src.core.params import (
    ModelStructure,
    model_to_vector,
    parameter_names,
    structure_of,
    vector_to_model,
)

logger = logging.getLogger(__name__)

_BOUNDARY_RATIO = 1e-4


class FitOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    tolerance: float = Field(default_factory=lambda: app_settings.fit_tolerance, gt=0)
    max_iter: int = Field(default_factory=lambda: app_settings.fit_max_iter, ge=1)
    seed: int = 0
    multistart: int = Field(default_factory=lambda: app_settings.fit_multistart, ge=1)
    mode: Mode = "auto"
    n_jobs: int = Field(default_factory=lambda: app_settings.n_jobs)


class FitResult(BaseModel):
    theta_hat: MhtModel
    parameter_names: list[str]
    estimates: dict[str, float]
    std_errors: dict[str, float | None]
    loglik_at_max: float
    starting_loglik: float
    gradient_norm_at_max: float
    iterations: int
    converged: bool
    message: str = ""
    settings_used: InversionSettings
    options: FitOptions
    n_observations: int
    trace: list[dict[str, Any]] = []
    warnings: list[str] = []


# ── Transform ─────────────────────────────────────────────────


def _helmert_basis(n_support: int) -> np.ndarray:
    return helmert(n_support) if n_support > 1 else np.zeros((0, 1))


def transform_params(model: MhtModel) -> np.ndarray:
    """Unconstrained coordinates of ``model`` for its own structure."""
    structure = structure_of(model)
    e = model.exponent
    eta: list[float] = [np.log(e.sigma)] if structure.normalization == "drift" else [e.mu]
    if structure.jump_family == "discrete":
        rates = np.asarray(e.jumps.rates)
        gaps = np.diff(np.append(np.asarray(e.jumps.sizes), 0.0))
        eta += np.log(rates).tolist() + np.log(gaps).tolist()
    elif structure.jump_family == "gamma":
        eta += np.log(e.jumps.param_values()).tolist()
    eta += list(model.link.beta)
    support = np.asarray(model.mixing.support)
    eta += np.log(np.diff(np.insert(support, 0, 0.0))).tolist()
    log_pi = np.log(model.mixing.masses)
    eta += (_helmert_basis(structure.n_support) @ (log_pi - log_pi.mean())).tolist()
    out = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(out)):
        raise InvalidArgumentError("model maps to non-finite coordinates")
    return out


def n_coordinates(structure: ModelStructure) -> int:
    # one normalised parameter, and the masses lose a degree of freedom
    return structure.n_params - 2


def _split(eta: np.ndarray, structure: ModelStructure) -> dict[str, np.ndarray]:
    sizes = {
        "scale": 1,
        "jumps": structure.n_jump_params,
        "beta": structure.n_covariates,
        "support": structure.n_support,
        "masses": structure.n_support - 1,
    }
    parts, start = {}, 0
    for key, size in sizes.items():
        parts[key] = eta[start:start + size]
        start += size
    return parts


def natural_vector(eta, structure: ModelStructure) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (n_coordinates(structure),):
        raise InvalidArgumentError(
            f"expected {n_coordinates(structure)} coordinates, got shape {eta.shape}"
        )
    p = _split(eta, structure)
    if structure.normalization == "drift":
        head = [1.0, float(np.exp(p["scale"][0]))]
    else:
        head = [float(p["scale"][0]), 1.0]
    if structure.jump_family == "discrete":
        q = structure.n_shocks
        rates = np.exp(p["jumps"][:q])
        sizes = -np.cumsum(np.exp(p["jumps"][q:])[::-1])[::-1]
        jump = np.concatenate([rates, sizes])
    else:
        jump = np.exp(p["jumps"])
    support = np.cumsum(np.exp(p["support"]))
    masses = softmax(_helmert_basis(structure.n_support).T @ p["masses"])
    return np.concatenate([head, jump, p["beta"], support, masses])


def untransform_params(eta, structure: ModelStructure) -> MhtModel:
    return vector_to_model(natural_vector(eta, structure), structure)


def transform_jacobian(eta, structure: ModelStructure) -> np.ndarray:
    """d theta / d eta, shape (n_params, n_coordinates)."""
    eta = np.asarray(eta, dtype=float)
    p = _split(eta, structure)
    sl = structure.slices()
    jac = np.zeros((structure.n_params, eta.size))
    col = 0
    if structure.normalization == "drift":
        jac[1, col] = np.exp(p["scale"][0])
    else:
        jac[0, col] = 1.0
    col += 1
    rows = np.arange(sl["jumps"].start, sl["jumps"].stop)
    if structure.jump_family == "discrete":
        q = structure.n_shocks
        rates = np.exp(p["jumps"][:q])
        gaps = np.exp(p["jumps"][q:])
        jac[rows[:q], col + np.arange(q)] = rates
        # nu_i depends on eta_k for k >= i
        jac[np.ix_(rows[q:], col + q + np.arange(q))] = -np.triu(np.ones((q, q))) * gaps
    elif structure.jump_family == "gamma":
        jac[rows, col + np.arange(3)] = np.exp(p["jumps"])
    col += structure.n_jump_params
    k = structure.n_covariates
    jac[np.arange(sl["beta"].start, sl["beta"].stop), col + np.arange(k)] = 1.0
    col += k
    n_sup = structure.n_support
    jac[np.ix_(np.arange(sl["support"].start, sl["support"].stop), col + np.arange(n_sup))] = (
        np.tril(np.ones((n_sup, n_sup))) * np.exp(p["support"])
    )
    col += n_sup
    if n_sup > 1:
        basis = _helmert_basis(n_sup)
        pi = softmax(basis.T @ p["masses"])
        dpi = (np.diag(pi) - np.outer(pi, pi)) @ basis.T
        jac[np.ix_(np.arange(sl["masses"].start, sl["masses"].stop), col + np.arange(n_sup - 1))] = dpi
    return jac


# ── Starting values ───────────────────────────────────────────


def starting_values(data: Dataset, structure: ModelStructure, seed: int = 0) -> MhtModel:
    """Simple inverse Gaussian moments with unit barrier, rescaled to the normalisation.

    beta starts at zero and masses at 1/L. When the durations carry no
    dispersion the fallback coefficient of variation is 0.1.
    """
    if structure.n_covariates != len(data.covariate_names):
        raise InvalidArgumentError(
            f"structure has {structure.n_covariates} covariates, data has {len(data.covariate_names)}"
        )
    rng = np.random.default_rng(seed)
    t = data.durations()
    if data.complete().any():
        t = t[data.complete()]
    t_bar = float(t.mean())
    mu_hat = 1.0 / t_bar
    sig2_hat = float(np.mean(1.0 / t - 1.0 / t_bar))
    if not np.isfinite(sig2_hat) or sig2_hat <= 1e-12 * mu_hat:
        logger.warning("Degenerate durations, falling back to coefficient of variation 0.1")
        sig2_hat = 0.01 / t_bar
    sig_hat = float(np.sqrt(sig2_hat))

    if structure.normalization == "drift":
        mu, sigma, scale = 1.0, sig_hat / mu_hat, t_bar
    else:
        mu, sigma, scale = mu_hat / sig_hat, 1.0, 1.0 / sig_hat

    n_sup = structure.n_support
    if n_sup == 1:
        support = np.array([scale])
    else:
        support = np.sort(np.exp(rng.standard_normal(n_sup))) * scale
        support = np.maximum.accumulate(support * (1.0 + 1e-3 * np.arange(n_sup)))

    theta = [mu, sigma]
    if structure.jump_family == "discrete":
        q = structure.n_shocks
        magnitude = np.sort(np.exp(rng.standard_normal(q)))[::-1] * (1.0 + 1e-3 * np.arange(q))[::-1]
        sizes = -magnitude * 0.5 * scale
        rates = np.minimum(0.05, 0.5 * mu / (q * magnitude * 0.5 * scale))
        theta += rates.tolist() + sizes.tolist()
    elif structure.jump_family == "gamma":
        omega, tau = np.exp(rng.standard_normal(2))
        omega = omega / scale
        rate = min(0.05, 0.5 * mu * omega / tau)
        theta += [rate, omega, tau]
    theta += [0.0] * structure.n_covariates
    theta += support.tolist() + [1.0 / n_sup] * n_sup
    return vector_to_model(np.asarray(theta), structure)


# ── Fit ───────────────────────────────────────────────────────


class _Objective:
    """Negative log likelihood in eta, remembering the last evaluation."""

    def __init__(self, data, structure, settings, mode):
        self.data = data
        self.structure = structure
        self.settings = settings
        self.mode = mode
        self.mask = np.ones(structure.n_params, dtype=bool)
        self.last: dict[bytes, tuple[float, np.ndarray]] = {}

    def loglik_grad(self, eta) -> tuple[float, np.ndarray]:
        eta = np.asarray(eta, dtype=float)
        key = eta.tobytes()
        if key in self.last:
            return self.last[key]
        try:
            model = untransform_params(eta, self.structure)
            value, grad_nat = loglik_and_gradient(model, self.data, self.settings, self.mask, self.mode)
            grad = transform_jacobian(eta, self.structure).T @ grad_nat
        except (MhtError, ValueError) as exc:
            logger.debug("Objective failed at %s: %s", eta.tolist(), exc)
            value, grad = float("-inf"), np.full(eta.size, np.nan)
        self.last = {key: (value, grad)}
        return value, grad

    def __call__(self, eta) -> tuple[float, np.ndarray]:
        value, grad = self.loglik_grad(eta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return np.inf, np.zeros_like(eta)
        return -value, -grad


def _run_start(data, structure, settings, options: FitOptions, eta0: np.ndarray) -> dict:
    objective = _Objective(data, structure, settings, options.mode)
    start_value, _ = objective.loglik_grad(eta0)
    if not np.isfinite(start_value):
        raise NumericalError("log likelihood is not finite at the starting values", {"eta": eta0.tolist()})
    trace: list[dict[str, Any]] = []

    def record(xk):
        value, grad = objective.loglik_grad(xk)
        norm = float(np.max(np.abs(grad)))
        trace.append({"iteration": len(trace) + 1, "loglik": value, "gradient_norm": norm})
        logger.debug("iter %d: loglik=%.6f |grad|=%.3g", len(trace), value, norm)

    res = minimize(
        objective, eta0, jac=True, method="BFGS", callback=record,
        options={"gtol": options.tolerance, "maxiter": options.max_iter, "norm": np.inf},
    )
    value, grad = objective.loglik_grad(res.x)
    return {
        "eta": res.x,
        "loglik": value,
        "gradient_norm": float(np.max(np.abs(grad))) if grad.size else 0.0,
        "iterations": int(res.nit),
        "message": str(res.message),
        "start_loglik": start_value,
        "trace": trace,
    }


def _hessian(objective: _Objective, eta: np.ndarray, step: float) -> np.ndarray:
    n = eta.size
    hess = np.zeros((n, n))
    for j in range(n):
        h = step * max(1.0, abs(eta[j]))
        up, down = eta.copy(), eta.copy()
        up[j] += h
        down[j] -= h
        hess[:, j] = (objective.loglik_grad(up)[1] - objective.loglik_grad(down)[1]) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def _standard_errors(hess: np.ndarray, jac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Natural-scale standard errors and a mask of those that are available."""
    n_params = jac.shape[0]
    if not np.all(np.isfinite(hess)):
        return np.full(n_params, np.nan), np.zeros(n_params, dtype=bool)
    eigval, eigvec = np.linalg.eigh(-hess)
    good = eigval > 1e-10 * max(1.0, float(np.abs(eigval).max(initial=0.0)))
    cov_eta = (eigvec[:, good] / eigval[good]) @ eigvec[:, good].T
    affected = np.any(np.abs(eigvec[:, ~good]) > 1e-8, axis=1)
    cov = jac @ cov_eta @ jac.T
    depends = np.abs(jac) > 0
    available = depends.any(axis=1) & ~(depends[:, affected].any(axis=1))
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return se, available


def _boundary_warnings(model: MhtModel) -> list[str]:
    found = []
    support = np.asarray(model.mixing.support)
    if support.size > 1 and np.any(np.diff(support) < _BOUNDARY_RATIO * support[1:]):
        found.append("support points collapse: adjacent v are nearly equal")
    if np.any(np.asarray(model.mixing.masses) < _BOUNDARY_RATIO) and support.size > 1:
        found.append("a mixture mass is close to zero")
    jumps = model.exponent.jumps
    if jumps is not None and jumps.kind == "discrete":
        sizes = np.asarray(jumps.sizes)
        gaps = np.diff(np.append(sizes, 0.0))
        if np.any(gaps < _BOUNDARY_RATIO * np.abs(sizes)):
            found.append("shock sizes collapse: adjacent nu are nearly equal or near zero")
    return found


def fit(
    data: Dataset,
    structure: ModelStructure,
    settings: InversionSettings | None = None,
    options: FitOptions | None = None,
) -> FitResult:
    settings = settings or InversionSettings()
    options = options or FitOptions()
    names = parameter_names(structure, data.covariate_names)
    seeds = np.random.SeedSequence(options.seed).generate_state(options.multistart)
    starts = []
    for k, seed in enumerate(seeds):
        eta0 = transform_params(starting_values(data, structure, int(seed)))
        if k:
            eta0 = eta0 + 0.1 * np.random.default_rng(int(seed)).standard_normal(eta0.size)
        starts.append(eta0)
    logger.info(
        "Fitting %s model with L=%d on %d observations, %d start(s)",
        structure.jump_family, structure.n_support, len(data), len(starts),
    )

    def attempt(eta0):
        try:
            return _run_start(data, structure, settings, options, eta0)
        except MhtError as exc:
            logger.warning("Start failed: %s", exc)
            return None

    runs = Parallel(n_jobs=options.n_jobs)(delayed(attempt)(eta0) for eta0 in starts)
    runs = [r for r in runs if r is not None and np.isfinite(r["loglik"])]
    if not runs:
        raise NumericalError("every start failed", {"starts": len(starts)})
    for i, r in enumerate(runs):
        logger.info("Start %d: loglik=%.4f after %d iterations", i + 1, r["loglik"], r["iterations"])
    best = max(runs, key=lambda r: r["loglik"])

    eta = best["eta"]
    model = untransform_params(eta, structure)
    objective = _Objective(data, structure, settings, options.mode)
    hess = _hessian(objective, eta, app_settings.hessian_step)
    jac = transform_jacobian(eta, structure)
    se, available = _standard_errors(hess, jac)
    theta = model_to_vector(model)

    warnings = _boundary_warnings(model)
    converged = best["gradient_norm"] <= options.tolerance
    if not converged:
        warnings.append(f"not converged: {best['message']}")
    unavailable = [n for n, a, d in zip(names, available, np.abs(jac).any(axis=1)) if d and not a]
    if unavailable:
        warnings.append("standard errors unavailable for " + ", ".join(unavailable))
    for w in warnings:
        logger.warning("%s", w)

    return FitResult(
        theta_hat=model,
        parameter_names=names,
        estimates=dict(zip(names, theta.tolist())),
        std_errors={
            n: (float(s) if a else None) for n, s, a in zip(names, se, available)
        },
        loglik_at_max=best["loglik"],
        starting_loglik=best["start_loglik"],
        gradient_norm_at_max=best["gradient_norm"],
        iterations=best["iterations"],
        converged=converged,
        message=best["message"],
        settings_used=settings,
        options=options,
        n_observations=len(data),
        trace=best["trace"],
        warnings=warnings,
    )


def format_fit_table(result: FitResult) -> str:
    """Estimates with standard errors in parentheses, sigma^2 next to sigma."""
    rows: list[tuple[str, str, str]] = []
    for name in result.parameter_names:
        value = result.estimates[name]
        se = result.std_errors.get(name)
        rows.append((name, f"{value:.4f}", "" if se is None else f"({se:.4f})"))
        if name == "sigma":
            se2 = None if se is None else 2.0 * value * se
            rows.append(("sigma^2", f"{value**2:.4f}", "" if se2 is None else f"({se2:.4f})"))
    width = max(len(r[0]) for r in rows)
    lines = [f"{n:<{width}}  {v:>12}  {s}".rstrip() for n, v, s in rows]
    lines.append(f"{'loglik':<{width}}  {result.loglik_at_max:>12.1f}")
    lines.append(f"{'N':<{width}}  {result.n_observations:>12d}")
    if not result.converged:
        lines.append("(not converged)")
    return "\n".join(lines)
