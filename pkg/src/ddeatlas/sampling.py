"""Random segment and point generators used by the harness and tests."""

from __future__ import annotations

import numpy as np

from .segments import Grid, SegmentC1


def random_smooth_segment(
    grid: Grid, n: int, rng: np.random.Generator, scale: float = 0.5, modes: int = 3
) -> SegmentC1:
    """Low-frequency trigonometric segment with exact node derivatives.

    Smoothness (bounded third derivatives) keeps central-difference cross
    checks of directional derivatives well below their tolerances, which raw
    random Hermite data would not.
    """
    t = grid.nodes
    values = np.zeros((grid.m, n))
    derivs = np.zeros((grid.m, n))
    for j in range(n):
        values[:, j] += scale * rng.normal()
        for k in range(1, modes + 1):
            w = k * np.pi / grid.r
            a = scale * rng.normal() / k
            b = scale * rng.normal() / k
            values[:, j] += a * np.cos(w * t) + b * np.sin(w * t)
            derivs[:, j] += -a * w * np.sin(w * t) + b * w * np.cos(w * t)
    return SegmentC1(grid, values, derivs)


def random_raw_segment(
    grid: Grid, n: int, rng: np.random.Generator, scale: float = 0.5
) -> SegmentC1:
    """Unstructured Hermite node data (still a valid C1 function)."""
    return SegmentC1(
        grid,
        scale * rng.normal(size=(grid.m, n)),
        scale * rng.normal(size=(grid.m, n)),
    )


def random_flat_segment(
    grid: Grid, n: int, rng: np.random.Generator, scale: float = 0.5, smooth: bool = True
) -> SegmentC1:
    """Random segment with derivative exactly zero at t = 0."""
    seg = (
        random_smooth_segment(grid, n, rng, scale)
        if smooth
        else random_raw_segment(grid, n, rng, scale)
    )
    derivs = seg.derivs.copy()
    derivs[-1] = 0.0
    return SegmentC1(grid, seg.values, derivs)


def random_point_in_box(
    rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray
) -> np.ndarray:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    return lo + (hi - lo) * rng.random(lo.shape)
