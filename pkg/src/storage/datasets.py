from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from src.core.errors import ParseError, RowValidationError, SchemaError
from src.core.models import Dataset, InversionSettings

logger = logging.getLogger(__name__)

KENNAN_COVARIATE = "log_industrial_production"
DAYS_PER_WEEK = 7.0


class CsvSchema(BaseModel):
    model_config = ConfigDict(frozen=True)

    duration_col: str = "duration"
    status_col: str | None = None
    covariate_cols: list[str] = []


# ── Readers ───────────────────────────────────────────────────


def ingest_kennan(path: str | Path, days_to_weeks: bool = True) -> Dataset:
    """Strike durations file: two whitespace-separated columns per line.

    Column one is the duration in days, column two the deseasonalised log of
    industrial production. Blank lines are skipped; every strike is complete.
    """
    path = Path(path)
    durations: list[float] = []
    covariate: list[float] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        fields = raw.split()
        if not fields:
            continue
        if len(fields) != 2:
            raise SchemaError(f"{path}:{lineno}: expected 2 columns, found {len(fields)}")
        try:
            t, x = float(fields[0]), float(fields[1])
        except ValueError as exc:
            raise ParseError(str(path), lineno, f"not a number: {raw.strip()!r}") from exc
        if not (np.isfinite(t) and np.isfinite(x)):
            raise ParseError(str(path), lineno, "non-finite value")
        if t <= 0:
            raise RowValidationError(str(path), lineno, f"duration must be positive, got {t}")
        durations.append(t / DAYS_PER_WEEK if days_to_weeks else t)
        covariate.append(x)
    if not durations:
        raise SchemaError(f"{path}: no records")
    logger.info("Read %d strikes from %s", len(durations), path)
    return Dataset.from_arrays(
        durations, covariates=np.array(covariate)[:, None], covariate_names=[KENNAN_COVARIATE]
    )


def ingest_csv(path: str | Path, schema: CsvSchema | None = None, days_to_weeks: bool = False) -> Dataset:
    path = Path(path)
    schema = schema or CsvSchema()
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise SchemaError(f"{path}: empty file") from exc
    except pd.errors.ParserError as exc:
        raise SchemaError(f"{path}: {exc}") from exc

    wanted = [schema.duration_col, *schema.covariate_cols]
    if schema.status_col is not None:
        wanted.append(schema.status_col)
    missing = [c for c in wanted if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: unknown column(s) {missing}; have {list(frame.columns)}")
    if frame.empty:
        raise SchemaError(f"{path}: no rows")

    numeric = frame[wanted].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1) | ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise RowValidationError(str(path), row, "missing or non-numeric value")

    durations = numeric[schema.duration_col].to_numpy(dtype=float)
    nonpositive = np.flatnonzero(durations <= 0)
    if nonpositive.size:
        row = int(nonpositive[0])
        raise RowValidationError(str(path), row, f"duration must be positive, got {durations[row]}")
    if days_to_weeks:
        durations = durations / DAYS_PER_WEEK

    complete = None
    if schema.status_col is not None:
        status = numeric[schema.status_col].to_numpy(dtype=float)
        invalid = np.flatnonzero((status != 0) & (status != 1))
        if invalid.size:
            row = int(invalid[0])
            raise RowValidationError(str(path), row, f"status must be 0 or 1, got {status[row]}")
        complete = status == 1

    try:
        data = Dataset.from_arrays(
            durations,
            complete,
            numeric[schema.covariate_cols].to_numpy(dtype=float),
            list(schema.covariate_cols),
        )
    except ValidationError as exc:
        raise SchemaError(f"{path}: {exc.errors()[0]['msg']}") from exc
    logger.info("Read %d observations (%d censored) from %s", len(data), int((~data.complete()).sum()), path)
    return data


# ── Writers ───────────────────────────────────────────────────


def dataset_frame(data: Dataset) -> pd.DataFrame:
    frame = pd.DataFrame({"duration": data.durations(), "status": data.complete().astype(int)})
    for j, name in enumerate(data.covariate_names):
        frame[name] = data.covariates()[:, j]
    return frame


def write_dataset_csv(data: Dataset, path: str | Path) -> CsvSchema:
    """Write ``data`` so that ``ingest_csv(path, schema)`` reads it back unchanged."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset_frame(data).to_csv(path, index=False, float_format="%.17g")
    return CsvSchema(duration_col="duration", status_col="status", covariate_cols=list(data.covariate_names))


def stamp_settings(frame: pd.DataFrame, settings: InversionSettings) -> pd.DataFrame:
    """Copy of ``frame`` with one column per inversion setting it does not already have."""
    extra = {k: v for k, v in settings.model_dump().items() if k not in frame.columns}
    return frame.assign(**extra)


def write_table(frame: pd.DataFrame, path: str | Path, settings: InversionSettings | None = None) -> None:
    """CSV table, stamped with the inversion settings that produced it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if settings is not None:
        frame = stamp_settings(frame, settings)
    frame.to_csv(path, index=False, float_format="%.17g")


def write_json(model: BaseModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2))
