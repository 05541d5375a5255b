"""Density and survival of MHT durations by Euler-summed Laplace inversion.

The Bromwich integral is taken along the image of the vertical line
Re s = c under Lambda_BM, so that the transform of the duration only involves
psi, Lambda_BM and the mixing transform:

    survival:  exp(psi(z) t) (L(z0 phi) - L(z phi)) / psi(z) * psi'(z) Lambda_BM'(s)
    density:   exp(psi(z) t) L(z phi) * psi'(z) Lambda_BM'(s),   z = Lambda_BM(s)

z0 is the largest root of psi, zero unless the process drifts away from the
threshold. Anchoring the survival numerator at z0 makes the integrand regular
at every zero of psi with Re z > 0, so any c > 0 is admissible. The defect
1 - L(z0 phi) is added back after summation.

Nodes s = c + i r h with c = c_over_t / t and h = pi h_times_t / t, so that
exp(s t) alternates in sign along the nodes. Conjugate symmetry lets the
trapezoid sum run over r >= 0 only, and the binomial averages E_{R,M},
E_{R,M+1} are fixed weight vectors over those nodes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.special import comb

from src.config import settings as app_settings
from src.core.errors import InvalidArgumentError, NumericalError, SingularityError
from src.core.gaussian import barriers
from src.core.levy import lambda_bm, lambda_numeric, psi_eval, psi_prime, psi_second
from src.core.models import InversionResult, InversionSettings, LevyExponentSpec, MhtModel

logger = logging.getLogger(__name__)

Kind = Literal["density", "survival"]


@lru_cache(maxsize=32)
def euler_weights(R: int, M: int) -> np.ndarray:
    """Weights turning half-contour terms r = 0..R+M+1 into (E_{R,M}, E_{R,M+1}).

    Row 0 gives E_{R,M}, row 1 gives E_{R,M+1}. Each already includes the
    trapezoid doubling of the r >= 1 terms.
    """
    n_nodes = R + M + 2
    trapezoid = np.full(n_nodes, 2.0)
    trapezoid[0] = 1.0
    rows = []
    for order in (M, M + 1):
        w = comb(order, np.arange(order + 1)) / 2.0**order
        tails = np.cumsum(w[::-1])[::-1]
        k = np.maximum(np.arange(n_nodes) - R, 0)
        rows.append(np.where(k <= order, tails[np.minimum(k, order)], 0.0) * trapezoid)
    weights = np.vstack(rows)
    weights.setflags(write=False)
    return weights


def contour_nodes(t, settings: InversionSettings) -> tuple[np.ndarray, np.ndarray]:
    """Nodes s (N, R+M+2) and trapezoid steps h (N,) for durations t (N,)."""
    t = np.asarray(t, dtype=float)
    c = settings.c_over_t / t
    h = np.pi * settings.h_times_t / t
    r = np.arange(settings.n_nodes)
    return c[:, None] + 1j * h[:, None] * r[None, :], h


@dataclass
class DefectRoot:
    """Largest root z0 of psi and its derivatives in ``exponent.param_names()`` order."""

    z0: float
    dz0: np.ndarray

    @property
    def defective(self) -> bool:
        return self.z0 > 0


def defect_root(exponent: LevyExponentSpec) -> DefectRoot:
    n_psi = len(exponent.param_names())
    if psi_prime(exponent, 0.0) >= 0:
        return DefectRoot(0.0, np.zeros(n_psi))
    z0 = lambda_numeric(exponent, 0.0)
    # implicit differentiation of psi(z0; theta) = 0
    direct = [z0, exponent.sigma * z0**2]
    if exponent.jumps is not None:
        d_jump, _ = exponent.jumps.partials(np.array([z0]))
        direct.extend(np.asarray(d_jump, dtype=float)[0].tolist())
    return DefectRoot(z0, -np.asarray(direct) / psi_prime(exponent, z0))


@dataclass
class _Terms:
    q: np.ndarray
    dq_db: np.ndarray | None = None
    dq_dpsi: np.ndarray | None = None


def _integrand_terms(
    exponent: LevyExponentSpec,
    t: np.ndarray,
    barrier: np.ndarray,
    s: np.ndarray,
    kind: Kind,
    gradient: bool = False,
    anchor: DefectRoot | None = None,
) -> _Terms:
    """Per-component integrand on nodes ``s``; shapes (N, L, J) [, P].

    ``t`` is (N,), ``barrier`` is (N, L), ``s`` is (N, J). Parameter
    derivatives are ordered as ``exponent.param_names()``. ``anchor`` is
    the defect root used by the survival numerator.
    """
    anchor = anchor or defect_root(exponent)
    z0 = anchor.z0
    mu, sigma = exponent.mu, exponent.sigma
    z = lambda_bm(s, mu, sigma)
    root = np.sqrt(mu * mu + 2.0 * sigma * sigma * s)
    if np.any(root == 0):
        raise SingularityError("contour hits the branch point of Lambda_BM")
    zs = 1.0 / root
    w = psi_eval(exponent, z)
    if np.any(w == 0):
        raise SingularityError("psi(Lambda_BM(s)) vanishes on the contour")
    p1 = psi_prime(exponent, z)

    tt = t[:, None, None]
    bb = barrier[:, :, None]
    zz, ww, pp = z[:, None, :], w[:, None, :], (p1 * zs)[:, None, :]
    growth = ww * tt - zz * bb
    if kind == "density":
        q = np.exp(growth) * pp
    else:
        # L(z0 b) - L(z b) without cancellation near z = z0
        anchored = np.exp(-z0 * bb)
        numer = anchored * (-np.expm1(-(zz - z0) * bb))
        q = np.exp(ww * tt) * numer / ww * pp
    if not gradient:
        return _Terms(q)

    # derivatives of z = Lambda_BM(s) and of Lambda_BM'(s) in (mu, sigma)
    n_jump = len(exponent.param_names()) - 2
    zero = np.zeros(s.shape + (n_jump,), dtype=complex)
    dz = np.concatenate(
        [np.stack([-z * zs, 2.0 * s * zs / sigma - 2.0 * z / sigma], axis=-1), zero], axis=-1
    )
    dzs = np.concatenate(
        [np.stack([-mu * zs**3, -2.0 * sigma * s * zs**3], axis=-1), zero], axis=-1
    )
    direct_w = [z[..., None], (sigma * z**2)[..., None]]
    direct_p = [np.ones_like(z)[..., None], (2.0 * sigma * z)[..., None]]
    if exponent.jumps is not None:
        dj, djp = exponent.jumps.partials(z)
        direct_w.append(dj)
        direct_p.append(djp)
    p2 = psi_second(exponent, z)
    dw = np.concatenate(direct_w, axis=-1) + p1[..., None] * dz
    dp1 = np.concatenate(direct_p, axis=-1) + p2[..., None] * dz
    dpp = dp1 * zs[..., None] + p1[..., None] * dzs

    dw, dz4, dpp = dw[:, None], dz[:, None], dpp[:, None]
    t4, b4 = tt[..., None], bb[..., None]
    if kind == "density":
        e = np.exp(growth)
        dq_dpsi = e[..., None] * ((t4 * dw - b4 * dz4) * pp[..., None] + dpp)
        dq_db = -zz * q
    else:
        a = np.exp(ww * tt)
        ez = np.exp(-zz * bb)
        w4, a4, pp4, numer4 = ww[..., None], a[..., None], pp[..., None], numer[..., None]
        # d/dtheta of the numerator moves with z and with the anchor z0
        d_numer = b4 * (ez[..., None] * dz4 - anchored[..., None] * anchor.dz0)
        dq_dpsi = (a4 / w4) * (
            t4 * dw * numer4 * pp4
            + d_numer * pp4
            - numer4 * pp4 * dw / w4
            + numer4 * dpp
        )
        dq_db = a / ww * pp * (zz * ez - z0 * anchored)
    return _Terms(q, dq_db, dq_dpsi)


@dataclass
class ComponentInversion:
    """Euler sums per observation and mixture component."""

    value: np.ndarray
    value_next: np.ndarray
    d_barrier: np.ndarray | None = None
    d_psi: np.ndarray | None = None


def invert_components(
    exponent: LevyExponentSpec,
    t,
    barrier,
    kind: Kind,
    settings: InversionSettings,
    gradient: bool = False,
) -> ComponentInversion:
    """Invert every (observation, component) pair; ``barrier`` is (N, L).

    Survival sums include the defect 1 - exp(-z0 b), so ``value`` is the
    component survival function itself.
    """
    t = np.asarray(t, dtype=float)
    barrier = np.asarray(barrier, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise InvalidArgumentError("durations must be finite and positive")
    anchor = defect_root(exponent)
    weights = euler_weights(settings.R, settings.M)
    chunk = max(1, app_settings.inversion_chunk_size)
    values, d_barrier, d_psi = [], [], []
    for start in range(0, t.shape[0], chunk):
        tc = t[start:start + chunk]
        s, h = contour_nodes(tc, settings)
        terms = _integrand_terms(exponent, tc, barrier[start:start + chunk], s, kind, gradient, anchor)
        scale = (h / (2.0 * np.pi))[:, None, None]
        values.append(scale * np.einsum("nlj,kj->nlk", terms.q.real, weights))
        if gradient:
            d_barrier.append(scale[..., 0] * np.einsum("nlj,j->nl", terms.dq_db.real, weights[0]))
            d_psi.append(scale * np.einsum("nljp,j->nlp", terms.dq_dpsi.real, weights[0]))
    sums = np.concatenate(values, axis=0)
    if not np.all(np.isfinite(sums)):
        bad = np.flatnonzero(~np.all(np.isfinite(sums), axis=(1, 2)))
        raise NumericalError(
            "non-finite Euler partial sums",
            {"t": t[bad].tolist()[:10], "settings": settings.model_dump(), "kind": kind},
        )
    result = ComponentInversion(value=sums[..., 0], value_next=sums[..., 1])
    if gradient:
        result.d_barrier = np.concatenate(d_barrier, axis=0)
        result.d_psi = np.concatenate(d_psi, axis=0)
    if kind == "survival" and anchor.defective:
        kept = np.exp(-anchor.z0 * barrier)
        result.value = result.value + (1.0 - kept)
        result.value_next = result.value_next + (1.0 - kept)
        if gradient:
            result.d_barrier = result.d_barrier + anchor.z0 * kept
            result.d_psi = result.d_psi + (barrier * kept)[..., None] * anchor.dz0
    return result


def invert_many(
    model: MhtModel, t, covariates, kind: Kind, settings: InversionSettings
) -> tuple[np.ndarray, np.ndarray]:
    """Mixture Euler sums E_{R,M} and error estimates |E_{R,M+1} - E_{R,M}| for many t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    covariates = np.asarray(covariates, dtype=float).reshape(t.shape[0], model.n_covariates)
    comp = invert_components(model.exponent, t, barriers(model, covariates), kind, settings)
    pi = np.asarray(model.mixing.masses)
    value = comp.value @ pi
    error = np.abs((comp.value_next - comp.value) @ pi)
    return value, error


def _mixture_integrand(model: MhtModel, x, t: float, s, kind: Kind):
    t_arr = np.array([float(t)])
    if not t_arr[0] > 0:
        raise InvalidArgumentError(f"t must be positive, got {t}")
    s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
    x = np.asarray(x, dtype=float).reshape(1, model.n_covariates)
    terms = _integrand_terms(
        model.exponent, t_arr, barriers(model, x), s_arr.reshape(1, -1), kind
    )
    value = (terms.q[0] * np.asarray(model.mixing.masses)[:, None]).sum(axis=0)
    return value.reshape(np.shape(s)) if np.ndim(s) else complex(value[0])


def survival_integrand(model: MhtModel, x, t: float, s):
    """exp(psi(z) t) (L(z0 phi(x)) - L(z phi(x))) / psi(z) * dpsi(Lambda_BM(s))/ds.

    z0 = 0 unless the process drifts away from the threshold, which leaves
    the usual 1 - L(z phi(x)) numerator.
    """
    return _mixture_integrand(model, x, t, s, "survival")


def density_integrand(model: MhtModel, x, t: float, s):
    """exp(psi(z) t) L(z phi(x)) * dpsi(Lambda_BM(s))/ds."""
    return _mixture_integrand(model, x, t, s, "density")


def euler_invert(
    integrand: Kind, model: MhtModel, x, t: float, settings: InversionSettings | None = None
) -> InversionResult:
    settings = settings or InversionSettings()
    if not float(t) > 0:
        raise InvalidArgumentError(f"t must be positive, got {t}")
    value, error = invert_many(model, [float(t)], [x], integrand, settings)
    return InversionResult(
        value=float(value[0]), error_estimate=float(error[0]), evaluations=settings.n_nodes
    )


def clamp(value, error, lower: float, upper: float | None, what: str, t=None):
    """Clamp inversion artefacts into [lower, upper], refusing large violations."""
    value = np.asarray(value, dtype=float)
    allowance = np.maximum(10.0 * np.asarray(error), app_settings.clamp_floor)
    hi = np.inf if upper is None else upper
    excess = np.maximum(lower - value, value - hi)
    if np.any(excess > allowance):
        worst = int(np.argmax(excess - allowance))
        raise NumericalError(
            f"{what} outside its range by more than the error allowance",
            {
                "value": float(value.flat[worst]),
                "error_estimate": float(np.asarray(error).flat[worst]),
                "t": None if t is None else float(np.asarray(t).flat[worst]),
            },
        )
    return np.clip(value, lower, hi)


def invert_density(model: MhtModel, x, t: float, settings: InversionSettings | None = None) -> float:
    res = euler_invert("density", model, x, t, settings)
    return float(clamp(res.value, res.error_estimate, 0.0, None, "density", t))


def invert_survival(model: MhtModel, x, t: float, settings: InversionSettings | None = None) -> float:
    res = euler_invert("survival", model, x, t, settings)
    return float(clamp(res.value, res.error_estimate, 0.0, 1.0, "survival", t))
