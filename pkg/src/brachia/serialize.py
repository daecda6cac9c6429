"""Conversion of results to plain JSON-compatible Python values."""

from __future__ import annotations

import json
import math
from enum import Enum

import numpy as np


def plain(obj):
    """Recursively convert numpy values, enums and tuples; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, Enum):
        return obj.value
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, full float precision)."""
    return json.dumps(plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
