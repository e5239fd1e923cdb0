"""CSV and JSON artifact writers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvariantViolation, PhwaveError


def format_value(value) -> str:
    """Integers verbatim, floats with 17 significant digits and ``.`` as decimal point."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (complex, np.complexfloating)):
        raise TypeError("complex values must be split into real and imaginary columns")
    return str(value)


def _is_nan(value) -> bool:
    return isinstance(value, (float, np.floating)) and math.isnan(value)


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` under ``header``; the whole table is checked before anything is written."""
    path = Path(path)
    header = list(header)
    table = []
    for i, row in enumerate(rows):
        row = list(row)
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i} has {len(row)} fields, header has {len(header)}")
        for name, val in zip(header, row):
            if _is_nan(val):
                raise InvariantViolation(f"{path}: NaN in column {name!r} of row {i}")
        table.append([format_value(v) for v in row])
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(header)
            writer.writerows(table)
    except OSError as exc:
        raise PhwaveError(f"cannot write {path}: {exc}") from exc
    return path


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    return value


def write_summary(path, summary: dict) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise PhwaveError(f"cannot write {path}: {exc}") from exc
    return path
