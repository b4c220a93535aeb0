"""Small dense solver for the chart-inversion fixed point.

Both chart kinds invert by solving x = f(chi + Y . x) for x in R^n: the frame
freezes the L-value, so the infinite-dimensional inversion collapses to this
n-dimensional problem.  Newton iteration uses the closed-form directional
derivative of f along the frame columns; on breakdown it falls back to damped
fixed-point iteration with step halving.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoConvergenceError
from .model import Model
from .segments import MatSegmentC1, SegmentC1


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 100
    tol: float = 1e-13


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float
    method: str


def solve_derivative_value(
    model: Model,
    frame: MatSegmentC1,
    base: SegmentC1,
    x0: np.ndarray | None = None,
    settings: SolverSettings = SolverSettings(),
) -> SolveResult:
    """Solve x = f(base + frame . x); returns the certified fixed point."""
    n = model.n

    def residual(x: np.ndarray) -> np.ndarray:
        return x - model.rhs_f(base + frame.apply(x))

    def jacobian(x: np.ndarray) -> np.ndarray:
        phi = base + frame.apply(x)
        cols = np.empty((n, n))
        for j in range(n):
            cols[:, j] = model.df(phi, frame.column(j))
        return np.eye(n) - cols

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    # Newton phase.
    iterations = 0
    best = None
    ok = True
    for _ in range(settings.max_iterations):
        h = residual(x)
        nh = float(np.max(np.abs(h)))
        if best is None or nh < best:
            best = nh
        if nh <= settings.tol:
            return SolveResult(x=x, iterations=iterations, residual=nh, method="newton")
        try:
            step = np.linalg.solve(jacobian(x), h)
        except np.linalg.LinAlgError:
            ok = False
            break
        if not np.all(np.isfinite(step)) or float(np.max(np.abs(step))) > 1e6:
            ok = False
            break
        x = x - step
        iterations += 1
        if not np.all(np.isfinite(x)):
            ok = False
            break
    if ok and best is not None and best <= settings.tol:
        return SolveResult(x=x, iterations=iterations, residual=best, method="newton")

    # Damped fixed-point fallback: x <- x + s (f(...) - x), halving s on growth.
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    s = 1.0
    prev = float("inf")
    for it in range(settings.max_iterations):
        h = residual(x)
        nh = float(np.max(np.abs(h)))
        if nh <= settings.tol:
            return SolveResult(x=x, iterations=iterations + it, residual=nh, method="damped")
        if nh >= prev:
            s = max(s / 2.0, 1.0 / 1024.0)
        prev = nh
        x = x - s * h
        if not np.all(np.isfinite(x)):
            break
    raise NoConvergenceError(
        "no_convergence: chart inversion left the contraction region",
        iterations=settings.max_iterations,
        residual=prev,
    )
