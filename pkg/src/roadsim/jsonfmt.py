"""Deterministic JSON emission with fixed 9-decimal float formatting.

Episode logs and reports must compare byte-for-byte across runs, so floats
are always written with exactly nine decimals (stdlib json would use repr,
whose shortest-round-trip digits vary in length). Dict insertion order is
preserved; callers build mappings deterministically.
"""

from __future__ import annotations

import json
import math

from .errors import ContractError

FLOAT_DECIMALS = 9


def format_float(value: float) -> str:
    """Fixed 9-decimal rendering; -0.0 normalizes to 0.0."""
    if not math.isfinite(value):
        raise ContractError(f"cannot serialize non-finite float {value!r}")
    text = f"{value:.{FLOAT_DECIMALS}f}"
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def dumps(obj) -> str:
    """Serialize dicts/sequences/scalars; floats via format_float."""
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=True)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, dict):
        parts = []
        for key, value in obj.items():
            if not isinstance(key, str):
                raise ContractError(f"JSON object keys must be str, got {key!r}")
            parts.append(f"{json.dumps(key, ensure_ascii=True)}:{dumps(value)}")
        return "{" + ",".join(parts) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(item) for item in obj) + "]"
    raise ContractError(f"cannot serialize {type(obj).__name__} to JSON")
