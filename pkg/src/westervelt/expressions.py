"""Closed-form data given as arithmetic strings in ``x``, ``y`` and ``t``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp

from .errors import ScenarioError

X, Y, T = sp.symbols("x y t", real=True)
_LOCALS = {"x": X, "y": Y, "t": T, "pi": sp.pi, "e": sp.E}


def parse(expr) -> sp.Expr:
    """Parse a number or expression string into a sympy expression."""
    if isinstance(expr, sp.Basic):
        return expr
    if isinstance(expr, (int, float)):
        return sp.Float(expr) if isinstance(expr, float) else sp.Integer(expr)
    if not isinstance(expr, str):
        raise ScenarioError(f"expected a number or expression string, got {type(expr).__name__}")
    try:
        parsed = sp.sympify(expr, locals=_LOCALS)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ScenarioError(f"cannot parse expression {expr!r}: {exc}") from exc
    extra = parsed.free_symbols - {X, Y, T}
    if extra:
        raise ScenarioError(f"expression {expr!r} uses unknown symbols {sorted(map(str, extra))}")
    return parsed


@dataclass(frozen=True)
class SpaceTimeFunction:
    """Vectorized evaluator ``f(points, t)`` for points of shape (..., d)."""

    expr: sp.Expr
    _fn: Callable

    def __call__(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        x = points[..., 0]
        y = points[..., 1] if points.shape[-1] > 1 else np.zeros_like(x)
        value = self._fn(x, y, float(t))
        return np.broadcast_to(np.asarray(value, dtype=float), x.shape).copy()

    @property
    def is_zero(self) -> bool:
        return self.expr.is_zero is True

    def diff_t(self) -> "SpaceTimeFunction":
        return compile_expression(sp.diff(self.expr, T))


def compile_expression(expr) -> SpaceTimeFunction:
    parsed = parse(expr)
    return SpaceTimeFunction(parsed, sp.lambdify((X, Y, T), parsed, modules="numpy"))


@dataclass(frozen=True)
class TimeTable:
    """Spatially uniform datum given by samples in time, linearly interpolated."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or len(self.times) < 1:
            raise ScenarioError("boundary table needs equally many (>= 1) times and values")
        if np.any(np.diff(self.times) <= 0):
            raise ScenarioError("boundary table times must be strictly increasing")

    def __call__(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        value = float(np.interp(t, self.times, self.values))
        return np.full(points.shape[:-1], value)

    @property
    def is_zero(self) -> bool:
        return not any(self.values)

    def diff_t(self) -> "TimeTable":
        t = np.asarray(self.times)
        v = np.asarray(self.values)
        if len(t) == 1:
            return TimeTable(self.times, (0.0,))
        slopes = np.diff(v) / np.diff(t)
        # piecewise-constant derivative sampled at interval midpoints
        mids = 0.5 * (t[1:] + t[:-1])
        if len(mids) == 1:
            return TimeTable((float(mids[0]),), (float(slopes[0]),))
        return TimeTable(tuple(map(float, mids)), tuple(map(float, slopes)))
