"""
Report writers for experiment results.

CSV: one file per table (header row, '.' decimal) plus a `<experiment>.meta.json`
sidecar. JSON: a single `<experiment>.json` holding {"experiment", "meta", "tables"}.
Nothing time-dependent is written, so reruns are byte-identical.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from ..core.errors import InputValidationError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"


class ReportFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


@dataclass
class ExperimentResult:
    experiment: str
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)


def jsonable(value: Any) -> Any:
    """Convert numpy scalars, enums and non-finite floats into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dump_json(payload: Any) -> str:
    return json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n"


def _prepare_dir(out_dir: Path) -> Path:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputValidationError(f"cannot create output directory '{out_dir}': {e}") from e
    return out_dir


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise InputValidationError(f"cannot write '{path}': {e}") from e
    logger.info(f"wrote {path}")


def write_result(result: ExperimentResult, out_dir: Path, fmt: ReportFormat) -> list[Path]:
    """Write an experiment's tables and metadata; returns the files written."""
    fmt = ReportFormat(fmt)
    out_dir = _prepare_dir(Path(out_dir))
    written: list[Path] = []

    if fmt is ReportFormat.JSON:
        payload = {
            "experiment": result.experiment,
            "meta": result.meta,
            "tables": {name: df.to_dict(orient="records") for name, df in result.tables.items()},
        }
        path = out_dir / f"{result.experiment}.json"
        _write_text(path, dump_json(payload))
        return [path]

    for name, df in result.tables.items():
        path = out_dir / f"{name}.csv"
        _write_text(path, df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))
        written.append(path)
    meta_path = out_dir / f"{result.experiment}.meta.json"
    _write_text(meta_path, dump_json({"experiment": result.experiment, "meta": result.meta}))
    written.append(meta_path)
    return written
