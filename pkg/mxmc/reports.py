"""
Report serialization: JSON with round-trip floats, CSV through pandas.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
import math
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.12g"


def to_jsonable(value: Any) -> Any:
    """Plain JSON data; infinities become "inf"/"-inf" and NaN becomes "nan"."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, pd.DataFrame):
        return [to_jsonable(row) for row in value.to_dict(orient="records")]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def from_json_number(value: Union[str, float, int]) -> float:
    """Inverse of the infinity encoding used by ``to_jsonable``."""
    return float(value)


def dumps(report: Any) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(to_jsonable(report), indent=2, allow_nan=False)


def write_json(report: Any, out: Optional[Union[str, Path]] = None) -> str:
    text = dumps(report)
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
        logger.info("📁 Report written to %s", path)
    return text


def write_csv(frame: pd.DataFrame, out: Optional[Union[str, Path]] = None) -> str:
    text = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT)
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info("📁 CSV written to %s", path)
    return text


def flatten(report: Any, prefix: str = "") -> dict:
    """Nested report to a single row of dotted keys, for CSV output of scalar reports."""
    data = to_jsonable(report)
    row = {}
    if isinstance(data, dict):
        for key, value in data.items():
            name = f"{prefix}{key}"
            if isinstance(value, dict):
                row.update(flatten(value, f"{name}."))
            elif isinstance(value, list):
                row[name] = json.dumps(value)
            else:
                row[name] = value
    else:
        row[prefix.rstrip(".") or "value"] = data
    return row


def report_frame(report: Any) -> pd.DataFrame:
    if isinstance(report, pd.DataFrame):
        return report
    if isinstance(report, (list, tuple)):
        return pd.DataFrame([flatten(item) for item in report])
    return pd.DataFrame([flatten(report)])
