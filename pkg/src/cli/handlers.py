from __future__ import annotations

import argparse
import logging
import sys

import numpy as np
import pandas as pd

from src.cli.config import RunConfig, load_model
from src.core.errors import InvalidArgumentError
from src.core.estimate import FitResult, fit, format_fit_table, starting_values
from src.core.gaussian import barriers, ig_density, ig_survival
from src.core.inversion import clamp, invert_many
from src.core.likelihood import loglik, raw_inverted_loglik
from src.core.models import Dataset, IgParams, MhtModel, MixingDistribution, SimSpec
from src.core.params import ModelStructure
from src.core.simulate import simulate_dataset
from src.storage.datasets import (
    CsvSchema,
    dataset_frame,
    ingest_csv,
    ingest_kennan,
    stamp_settings,
    write_dataset_csv,
    write_json,
    write_table,
)

logger = logging.getLogger(__name__)

HELP_TEXT = {
    "fit": "estimate a model by maximum likelihood",
    "simulate": "draw a dataset from a model",
    "density": "tabulate the inverted density over a t grid",
    "survival": "tabulate the inverted survival function over a t grid",
    "check-inversion": "compare inversion with the inverse Gaussian closed forms",
}


def register_handlers(subparsers) -> None:
    for command, text in HELP_TEXT.items():
        parser = subparsers.add_parser(command, help=text, argument_default=argparse.SUPPRESS)
        parser.set_defaults(command=command)
        _add_common(parser)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run file; flags override its keys")
    p.add_argument("--input", help="dataset path")
    p.add_argument("--format", dest="input_format", choices=["kennan", "csv"])
    p.add_argument("--duration-col", dest="duration_col")
    p.add_argument("--status-col", dest="status_col")
    p.add_argument("--covariate-cols", dest="covariate_cols", nargs="*")
    p.add_argument("--weeks", dest="days_to_weeks", action=argparse.BooleanOptionalAction,
                   help="divide durations by seven (default: on for kennan files)")
    p.add_argument("--output", help="result file (JSON for fit, CSV otherwise)")
    p.add_argument("--jumps", dest="jump_family", choices=["none", "discrete", "gamma"])
    p.add_argument("--shocks", dest="n_shocks", type=int, help="number of discrete shock sizes")
    p.add_argument("--support", dest="n_support", type=int, help="number of mixing support points")
    p.add_argument("--normalization", choices=["drift", "dispersion"])
    p.add_argument("--model", dest="model_file", help="model YAML/JSON or a fit result file")
    p.add_argument("--c-over-t", dest="c_over_t", type=float)
    p.add_argument("--h-times-t", dest="h_times_t", type=float, help="trapezoid step in units of pi / t")
    p.add_argument("--R", dest="R", type=int)
    p.add_argument("--M", dest="M", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--multistart", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["auto", "closed_form", "inverted"])
    p.add_argument("--n-jobs", dest="n_jobs", type=int)
    p.add_argument("--t", dest="t_values", type=float, nargs="+")
    p.add_argument("--t-min", dest="t_min", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--n-points", dest="n_points", type=int)
    p.add_argument("--log-grid", dest="log_grid", action="store_true")
    p.add_argument("--x", dest="x", type=float, nargs="*", help="covariate row")
    p.add_argument("--hazard", action="store_true", help="add a hazard column f/S")
    p.add_argument("--n-draws", dest="n_draws", type=int)
    p.add_argument("--censoring", dest="censoring_kind", choices=["none", "fixed", "exponential"])
    p.add_argument("--censoring-value", dest="censoring_value", type=float)
    p.add_argument("--m-values", dest="m_values", type=int, nargs="+")
    p.add_argument("--param-draws", dest="n_param_draws", type=int,
                   help="random parameter draws averaged over in the M sweep")


# ── Helpers ───────────────────────────────────────────────────


def _load_data(config: RunConfig) -> Dataset:
    if config.input is None:
        raise InvalidArgumentError(f"{config.command} needs --input")
    if config.input_format == "kennan":
        weeks = True if config.days_to_weeks is None else config.days_to_weeks
        return ingest_kennan(config.input, days_to_weeks=weeks)
    schema = CsvSchema(
        duration_col=config.duration_col,
        status_col=config.status_col,
        covariate_cols=config.covariate_cols,
    )
    return ingest_csv(config.input, schema, days_to_weeks=bool(config.days_to_weeks))


def _model(config: RunConfig) -> MhtModel:
    if config.model is not None:
        return config.model
    if config.model_file is None:
        raise InvalidArgumentError(f"{config.command} needs --model")
    return load_model(config.model_file)


def _grid(config: RunConfig) -> np.ndarray:
    if config.t_values is not None:
        return np.asarray(config.t_values, dtype=float)
    if config.log_grid:
        return np.geomspace(config.t_min, config.t_max, config.n_points)
    return np.linspace(config.t_min, config.t_max, config.n_points)


def _covariate_rows(model: MhtModel, config: RunConfig, n: int) -> np.ndarray:
    x = np.asarray(config.x, dtype=float)
    if x.size != model.n_covariates:
        raise InvalidArgumentError(f"--x has {x.size} values, model has {model.n_covariates} covariates")
    return np.tile(x, (n, 1))


def _emit(frame: pd.DataFrame, config: RunConfig) -> None:
    if config.output:
        write_table(frame, config.output, config.inversion)
        logger.info("Wrote %d rows to %s", len(frame), config.output)
    else:
        stamp_settings(frame, config.inversion).to_csv(sys.stdout, index=False, float_format="%.17g")


def _inverted_table(model: MhtModel, config: RunConfig, kind: str) -> pd.DataFrame:
    t = _grid(config)
    x = _covariate_rows(model, config, t.size)
    value, error = invert_many(model, t, x, kind, config.inversion)
    value = clamp(value, error, 0.0, 1.0 if kind == "survival" else None, kind, t)
    frame = pd.DataFrame({"t": t, "value": value, "error_estimate": error})
    if config.hazard:
        other = "survival" if kind == "density" else "density"
        other_value, _ = invert_many(model, t, x, other, config.inversion)
        f, s = (value, other_value) if kind == "density" else (other_value, value)
        with np.errstate(divide="ignore", invalid="ignore"):
            frame["hazard"] = np.where(s > 0, f / s, np.nan)
    return frame


# ── Commands ──────────────────────────────────────────────────


def cmd_fit(config: RunConfig) -> FitResult:
    data = _load_data(config)
    structure = config.structure(len(data.covariate_names))
    result = fit(data, structure, config.inversion, config.fit_options)
    if config.output:
        write_json(result, config.output)
        logger.info("Fit result written to %s", config.output)
    print(format_fit_table(result))
    return result


def cmd_simulate(config: RunConfig) -> Dataset:
    model = _model(config)
    source, names = None, None
    if config.input is not None:
        base = _load_data(config)
        source = [tuple(row) for row in base.covariates().tolist()]
        names = list(base.covariate_names)
    spec = SimSpec(
        model=model,
        n_draws=config.n_draws,
        seed=config.seed,
        censoring=config.censoring,
        covariate_source=source,
        covariate_names=names,
    )
    data = simulate_dataset(spec)
    if config.output:
        write_dataset_csv(data, config.output)
        logger.info("Wrote %d simulated observations to %s", len(data), config.output)
    else:
        dataset_frame(data).to_csv(sys.stdout, index=False, float_format="%.17g")
    return data


def cmd_density(config: RunConfig) -> pd.DataFrame:
    frame = _inverted_table(_model(config), config, "density")
    _emit(frame, config)
    return frame


def cmd_survival(config: RunConfig) -> pd.DataFrame:
    frame = _inverted_table(_model(config), config, "survival")
    _emit(frame, config)
    return frame


def _gaussian_oracle(model: MhtModel, t: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = barriers(model, x)
    pi = np.asarray(model.mixing.masses)
    mu, sigma = model.exponent.mu, model.exponent.sigma
    dens = np.zeros_like(t)
    surv = np.zeros_like(t)
    for l, p in enumerate(pi):
        for n in range(t.size):
            params = IgParams(mu=mu, sigma=sigma, barrier=float(b[n, l]))
            dens[n] += p * ig_density(params, t[n])
            surv[n] += p * ig_survival(params, t[n])
    return dens, surv


def cmd_check_inversion(config: RunConfig) -> pd.DataFrame:
    """Inverted density and survival against the closed forms, or the error-versus-M sweep."""
    model = _model(config) if (config.model or config.model_file) else MhtModel.model_validate(
        {"exponent": {"mu": 1.0, "sigma": 1.0}}
    )
    if model.exponent.jumps is not None:
        raise InvalidArgumentError("check-inversion needs a model without jumps")
    if config.m_values:
        frame = _m_sweep(model, config)
        _emit(frame, config)
        return frame

    t = _grid(config)
    x = _covariate_rows(model, config, t.size)
    dens, dens_err = invert_many(model, t, x, "density", config.inversion)
    surv, surv_err = invert_many(model, t, x, "survival", config.inversion)
    exact_dens, exact_surv = _gaussian_oracle(model, t, x)
    frame = pd.DataFrame({
        "t": t,
        "density": dens,
        "density_exact": exact_dens,
        "density_error": np.abs(dens - exact_dens),
        "scaled_error": np.abs(dens - exact_dens) * exact_dens,
        "density_error_estimate": dens_err,
        "survival": surv,
        "survival_exact": exact_surv,
        "survival_error": np.abs(surv - exact_surv),
        "survival_error_estimate": surv_err,
    })
    _emit(frame, config)
    worst = float(frame["scaled_error"].max())
    print(f"max |error| * f over {t.size} points: {worst:.3e}")
    logger.info("Max scaled density error %.3e", worst)
    return frame


def _sweep_models(data: Dataset, config: RunConfig) -> list[MhtModel]:
    """Gaussian models at the unit-barrier inverse Gaussian fit with random mixing support."""
    structure = ModelStructure(
        n_support=1, n_covariates=len(data.covariate_names), normalization=config.normalization
    )
    base = starting_values(data, structure, seed=config.seed)
    unit = base.mixing.support[0]
    n_sup = config.n_support
    rng = np.random.default_rng(config.seed)
    models = []
    for _ in range(config.n_param_draws):
        support = np.sort(np.exp(rng.standard_normal(n_sup))) * unit
        mixing = MixingDistribution(support=tuple(support.tolist()), masses=(1.0 / n_sup,) * n_sup)
        models.append(base.model_copy(update={"mixing": mixing}))
    return models


def _m_sweep(model: MhtModel, config: RunConfig) -> pd.DataFrame:
    """Log likelihood error of the raw Euler sums against the closed form, per M.

    Errors are averaged over random parameter draws; draws whose sums are not
    all positive are counted in ``n_invalid`` instead.
    """
    if config.input is not None:
        data = _load_data(config)
    else:
        data = simulate_dataset(SimSpec(model=model, n_draws=config.n_draws, seed=config.seed, censoring=config.censoring))
    models = _sweep_models(data, config)
    exact = np.array([loglik(m, data, mode="closed_form") for m in models])
    rows = []
    for m_terms in config.m_values:
        settings = config.inversion.model_copy(update={"M": m_terms})
        approx = np.array([raw_inverted_loglik(m, data, settings) for m in models])
        error = np.abs(approx - exact)
        valid = np.isfinite(error)
        rows.append({
            "M": m_terms,
            "mean_abs_error": float(error[valid].mean()) if valid.any() else float("nan"),
            "max_abs_error": float(error[valid].max()) if valid.any() else float("nan"),
            "n_invalid": int((~valid).sum()),
        })
        logger.info(
            "M=%d: mean |loglik error| %.3e, %d invalid of %d draws",
            m_terms, rows[-1]["mean_abs_error"], rows[-1]["n_invalid"], len(models),
        )
    return pd.DataFrame(rows)
