"""
CSV ingestion and emission of observed samples.

The on-disk layout is a header row `y,p,x1,...,xd` followed by one row per
observation. Row numbers in error messages count data rows from 0.
"""
import logging
import re
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .errors import InputValidationError
from .sample import ObservedSample

logger = logging.getLogger(__name__)

LATENT_COLUMNS = ("g", "true_m", "true_r")
FLOAT_FORMAT = "%.17g"

_COVARIATE = re.compile(r"^x([1-9][0-9]*)$")


def _covariate_columns(columns: list[str]) -> list[str]:
    indices = sorted(int(m.group(1)) for c in columns if (m := _COVARIATE.match(c)))
    if not indices:
        raise InputValidationError("CSV needs at least one covariate column x1", column="x1")
    expected = list(range(1, len(indices) + 1))
    if indices != expected:
        missing = sorted(set(expected) - set(indices))
        name = f"x{missing[0]}" if missing else f"x{indices[-1]}"
        raise InputValidationError(
            f"covariate columns must be x1..x{len(indices)} without gaps; '{name}' is missing",
            column=name,
        )
    return [f"x{i}" for i in expected]


def _numeric_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    raw = frame[name]
    values = pd.to_numeric(raw, errors="coerce")
    bad = np.flatnonzero(values.isna().to_numpy())
    if bad.size:
        row = int(bad[0])
        raise InputValidationError(
            f"column '{name}' row {row}: value {raw.iloc[row]!r} is not a number",
            row=row,
            column=name,
        )
    return values.to_numpy(dtype=float)


def read_sample_csv(path: Path) -> ObservedSample:
    """Parse a `y,p,x1..xd` CSV into an ObservedSample.

    Latent columns written by the generator (g, true_m, true_r) are ignored.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError as e:
        raise InputValidationError(f"input file '{path}' does not exist") from e
    except pd.errors.EmptyDataError as e:
        raise InputValidationError(f"input file '{path}' is empty") from e
    except pd.errors.ParserError as e:
        raise InputValidationError(f"input file '{path}' is not valid CSV: {e}") from e

    columns = [str(c).strip() for c in frame.columns]
    frame.columns = columns
    for required in ("y", "p"):
        if required not in columns:
            raise InputValidationError(f"CSV header lacks column '{required}'", column=required)
    x_columns = _covariate_columns(columns)
    unknown = [c for c in columns if c not in ("y", "p", *x_columns, *LATENT_COLUMNS)]
    if unknown:
        raise InputValidationError(f"unexpected CSV column '{unknown[0]}'", column=unknown[0])
    if frame.empty:
        raise InputValidationError(f"input file '{path}' has a header but no rows")

    y = _numeric_column(frame, "y")
    p = _numeric_column(frame, "p")
    x = np.column_stack([_numeric_column(frame, c) for c in x_columns])
    logger.info(f"read {len(frame)} rows with {len(x_columns)} covariates from {path}")
    return ObservedSample(y=y, x=x, p=p)


def sample_frame(
    sample: ObservedSample, latent: Optional[dict[str, np.ndarray]] = None
) -> pd.DataFrame:
    data = {"y": sample.y, "p": sample.p}
    for j in range(sample.d):
        data[f"x{j + 1}"] = sample.x[:, j]
    for name, values in (latent or {}).items():
        data[name] = values
    return pd.DataFrame(data)


def write_sample_csv(
    sample: ObservedSample, path: Path, latent: Optional[dict[str, np.ndarray]] = None
) -> Path:
    """Write `y,p,x1..xd` (plus any latent columns) with round-trip float precision."""
    path = Path(path)
    text = sample_frame(sample, latent).to_csv(
        index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise InputValidationError(f"cannot write '{path}': {e}") from e
    logger.info(f"wrote {sample.n} rows to {path}")
    return path
