"""Bundled reference tables and tolerance-aware comparison against them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

from .errors import InputError
from .pseudopotential import data_dir

TABLES = (
    "success_probability",
    "lambda_loc_integral",
    "lambda_nonloc_integral",
    "lambda_loc_sum",
    "interp_error",
    "lambda_nonloc_pointwise",
    "lambda_nonloc_box",
    "block_encoding",
    "lambda_qpe",
)


@lru_cache(maxsize=2)
def _load(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_golden() -> dict:
    path = data_dir() / "golden.json"
    if not path.exists():
        raise InputError(f"golden data not found: {path}")
    return _load(str(path))


def golden_table(name: str) -> dict:
    if name not in TABLES:
        raise InputError(f"unknown golden table {name!r}; choose from {TABLES}")
    return load_golden()[name]


@dataclass(frozen=True)
class CellDiff:
    key: str
    expected: float
    actual: float
    tolerance: str
    ok: bool

    @property
    def error(self) -> float:
        return self.actual - self.expected


def within(expected: float, actual: float, tol: dict) -> bool:
    if not math.isfinite(actual):
        return False
    if "abs" in tol:
        return abs(actual - expected) <= tol["abs"]
    return abs(actual - expected) <= tol["rel"] * abs(expected)


def tolerance_label(tol: dict) -> str:
    return f"abs {tol['abs']:g}" if "abs" in tol else f"rel {tol['rel']:g}"


def compare(expected: dict[str, float], actual: dict[str, float], tol: dict) -> list[CellDiff]:
    """Diff every key present in ``actual``; keys missing from ``expected`` are input errors."""
    out = []
    for key in sorted(actual):
        if key not in expected:
            raise InputError(f"no reference value for {key!r}")
        exp, act = float(expected[key]), float(actual[key])
        out.append(CellDiff(key, exp, act, tolerance_label(tol), within(exp, act, tol)))
    return out


def flatten(table: dict) -> dict[str, float]:
    """Reference cells of a table as 'row/column' -> value."""
    rows = table["rows"]
    out: dict[str, float] = {}
    if isinstance(rows, list):
        for r in rows:
            key = f"{r['cell']}/{''.join(map(str, r['bits']))}" + ("/CO" if r.get("adsorbate") else "")
            for k, v in r.items():
                if k not in ("cell", "bits", "adsorbate"):
                    out[f"{key}/{k}"] = v
        return out
    for row, val in rows.items():
        if isinstance(val, dict) and "p" in val:
            for n, p in val["p"].items():
                out[f"{row}/{n}"] = p
        elif isinstance(val, dict):
            for col, v in val.items():
                out[f"{row}/{col}"] = v
        elif isinstance(val, list):
            for col, v in zip(table.get("columns", range(len(val))), val):
                out[f"{row}/{col}"] = v
        else:
            out[row] = val
    return out
