"""
CSV reports. One row per parameter point, columns in first-seen order.
"""

from __future__ import annotations

import enum
import math

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.6g"


def _cell(value):
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (set, frozenset)):
        return ",".join(str(v) for v in sorted(value))
    return value


def jsonable(value):
    """Plain JSON types for stored runs; NaN becomes None."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, range, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [jsonable(v) for v in items]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def to_frame(rows: list[dict]) -> pd.DataFrame:
    columns = []
    for row in rows:
        columns.extend(key for key in row if key not in columns)
    return pd.DataFrame([{k: _cell(v) for k, v in row.items()} for row in rows], columns=columns)


def write_csv(frame: pd.DataFrame, target) -> None:
    """``target`` is a path or a text stream."""
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

