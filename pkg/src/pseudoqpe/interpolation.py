"""Piecewise-polynomial lookup of 2^-w, used for e^-z with w = z / ln 2.

The integer part of w becomes an exact bit shift.  The fractional part
selects one of P uniform panels on [0, 1), and the panel polynomial is held
as a0 + a1 d (a2 + d), with d the offset from the panel's left edge.  That
form needs two multiplications for a quadratic.  A linear panel keeps
a0 + a1 d and leaves a2 at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

ORDERS = ("linear", "quadratic")
SUPPORTED_PANELS = (64, 128, 256, 512)
LN2 = math.log(2.0)
# shifts beyond this many bits underflow the output register
MAX_SHIFT = 64
# quarter-b^2 Toffoli multipliers for the three products (linear) or with the extra one (quadratic)
_COST_QUARTERS = {"linear": 7, "quadratic": 11}


@dataclass(frozen=True)
class InterpTable:
    order: str
    panels: int
    coeffs: np.ndarray  # shape (panels, 3): a0, a1, a2

    @property
    def width(self) -> float:
        return 1.0 / self.panels


def _parse_order(order: str) -> str:
    if order not in ORDERS:
        raise InputError(f"interpolation order must be one of {ORDERS}, got {order!r}")
    return order


def build_table(order: str, panels: int, strict: bool = True) -> InterpTable:
    """Panel coefficients for 2^-w on [0, 1).

    Linear panels match the function at both panel ends.  Quadratic panels
    interpolate at the three Chebyshev nodes of the panel.  ``strict=False``
    accepts any power-of-two panel count, which tests use for small tables.
    """
    order = _parse_order(order)
    panels = int(panels)
    if panels < 1 or panels & (panels - 1):
        raise InputError("panel count must be a power of two")
    if strict and panels not in SUPPORTED_PANELS:
        raise InputError(f"panel count must be one of {SUPPORTED_PANELS}")
    h = 1.0 / panels
    left = np.arange(panels) * h
    coeffs = np.zeros((panels, 3))
    if order == "linear":
        f0 = np.exp2(-left)
        f1 = np.exp2(-(left + h))
        coeffs[:, 0] = f0
        coeffs[:, 1] = (f1 - f0) / h
    else:
        # Chebyshev nodes of the first kind mapped onto [0, h]
        t = 0.5 * h * (1.0 - np.cos((2 * np.arange(3) + 1) * np.pi / 6.0))
        for k, x0 in enumerate(left):
            c2, c1, c0 = np.polyfit(t, np.exp2(-(x0 + t)), 2)
            coeffs[k] = (c0, c2, c1 / c2)
    coeffs.setflags(write=False)
    return InterpTable(order, panels, coeffs)


def _panel_value(table: InterpTable, frac: np.ndarray) -> np.ndarray:
    idx = np.minimum((frac * table.panels).astype(np.int64), table.panels - 1)
    d = frac - idx * table.width
    a0, a1, a2 = table.coeffs[idx, 0], table.coeffs[idx, 1], table.coeffs[idx, 2]
    if table.order == "linear":
        return a0 + a1 * d
    return a0 + a1 * d * (a2 + d)


def evaluate(table: InterpTable, z):
    """Approximate e^-z for z >= 0 by shifting the panel value by floor(z / ln 2)."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise InputError("z must be non-negative")
    w = z / LN2
    k = np.floor(w)
    val = _panel_value(table, w - k)
    out = np.where(k < MAX_SHIFT, np.ldexp(val, -np.minimum(k, MAX_SHIFT).astype(np.int64)), 0.0)
    return out if out.ndim else float(out)


def analytic_bound(table: InterpTable, rigorous: bool = True) -> float:
    """Relative-error bound for the table.

    The leading-order forms are (h ln 2)^2 / 8 (linear) and (h ln 2)^3 / 192
    (quadratic, Chebyshev nodes).  The rigorous forms multiply by 2^h because
    the derivative is largest at the panel's left end while the function is
    smallest at its right end.
    """
    h = table.width
    base = (h * LN2) ** 2 / 8.0 if table.order == "linear" else (h * LN2) ** 3 / 192.0
    return base * 2.0 ** h if rigorous else base


def measured_error(table: InterpTable, samples: int = 2 ** 21) -> float:
    """Max relative error of the panel polynomial over a uniform sweep of [0, 1)."""
    w = np.linspace(0.0, 1.0, samples, endpoint=False)
    exact = np.exp2(-w)
    return float(np.max(np.abs(_panel_value(table, w) - exact) / exact))


def verify_error(table: InterpTable, samples: int = 2 ** 21) -> float:
    """Measured max relative error; raises if it exceeds the rigorous bound."""
    if samples < 10 ** 6:
        raise InputError("the sweep needs at least 10^6 points")
    err = measured_error(table, samples)
    bound = analytic_bound(table, rigorous=True)
    if err > bound:
        raise AssertionError(f"measured error {err:.3e} exceeds bound {bound:.3e}")
    return err


def interp_toffoli_cost(order: str, panels: int, b: int) -> int:
    """Toffolis for the lookup plus the panel arithmetic at b bits."""
    order = _parse_order(order)
    if b < 0 or panels < 1:
        raise InputError("b must be >= 0 and panels >= 1")
    return -(-_COST_QUARTERS[order] * b * b // 4) + int(panels)


def parse_interp_spec(spec: str) -> tuple[str, int]:
    """'linear:256' -> ('linear', 256)."""
    try:
        order, panels = spec.split(":")
        return _parse_order(order.strip()), int(panels)
    except ValueError as exc:
        raise InputError(f"interpolation spec must look like 'linear:256', got {spec!r}") from exc
