"""Machine-readable reports: deterministic JSON with 17-significant-digit floats."""
from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np

from . import __version__

SCHEMA_VERSION = 1


def _plain(obj):
    """Convert numpy scalars/arrays, tuples and Fractions to JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float, Fraction)):
        return float(obj)
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad, inner = " " * (indent * level), " " * (indent * (level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _encode(v, indent, level + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(str(obj), ensure_ascii=False)


def dumps(obj, indent: int = 2) -> str:
    return _encode(_plain(obj), indent, 0) + "\n"


def make_report(command: str, spec_path: str | None, digest: str | None, status: str,
                exit_code: int, result: dict, settings: dict | None = None,
                tolerances: dict | None = None, timing: dict | None = None) -> dict:
    rep = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "hydronets", "version": __version__},
        "command": command,
        "input": {"path": spec_path, "sha256": digest},
        "status": status,
        "exit_code": exit_code,
        "settings": settings or {},
        "tolerances": tolerances or {},
        "result": result,
    }
    if timing is not None:
        rep["timing"] = timing
    return rep


def write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(report))
