"""Discretized function segments on [-r, 0].

A ``SegmentC1`` stores cubic-Hermite node data (values and derivatives) on a
shared grid and is interpreted as the piecewise-cubic C1 function those data
determine.  Endpoint data are stored exactly, which matters because the value
and slope at t = 0 enter every construction downstream.  ``SegmentC0`` is the
piecewise-linear companion used where only continuity is available, and
``MatSegmentC1`` holds an n-by-n matrix of scalar C1 segments.

All node arrays are frozen after construction; every operation returns a new
object, so instances are safe to share between threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, GridMismatchError

# Absolute slack for clamping evaluation times to [-r, 0]; delay functions
# routinely return endpoint values polluted by roundoff.
EVAL_SLACK = 1e-9


def _hermite_basis(s: np.ndarray | float):
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return h00, h10, h01, h11


def _hermite_basis_deriv(s: np.ndarray | float):
    s2 = s * s
    d00 = 6.0 * s2 - 6.0 * s
    d10 = 3.0 * s2 - 4.0 * s + 1.0
    d01 = -6.0 * s2 + 6.0 * s
    d11 = 3.0 * s2 - 2.0 * s
    return d00, d10, d01, d11


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.flags.writeable = False
    return a


@dataclass(eq=False)
class Grid:
    """Node set t_0 = -r < ... < t_{m-1} = 0 shared by all segments of a run."""

    r: float
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("grid needs at least 3 nodes")
        if nodes[0] != -self.r or nodes[-1] != 0.0:
            raise ValueError("grid must span exactly [-r, 0]")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        if self.r <= 0:
            raise ValueError("delay horizon r must be positive")
        self.nodes = _freeze(nodes)

    @classmethod
    def uniform(cls, r: float, m: int = 65) -> "Grid":
        nodes = np.linspace(-float(r), 0.0, int(m))
        return cls(r=float(r), nodes=nodes)

    @property
    def m(self) -> int:
        return self.nodes.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.r == other.r
            and self.nodes.size == other.nodes.size
            and bool(np.array_equal(self.nodes, other.nodes))
        )

    def require_same(self, other: "Grid"):
        if self != other:
            raise GridMismatchError("segments must share one grid")

    def clamp_time(self, t: float) -> float:
        t = float(t)
        if t < -self.r - EVAL_SLACK or t > EVAL_SLACK:
            raise DomainError(f"t={t} outside [{-self.r}, 0]")
        return min(max(t, -self.r), 0.0)

    def locate(self, t: float) -> int:
        """Index i of the subinterval [t_i, t_{i+1}] containing t."""
        t = self.clamp_time(t)
        i = int(np.searchsorted(self.nodes, t, side="right")) - 1
        return min(max(i, 0), self.m - 2)

    def sample_times(self, per_interval: int = 8) -> np.ndarray:
        """Nodes plus ``per_interval`` equispaced points per subinterval."""
        left = self.nodes[:-1]
        width = np.diff(self.nodes)
        frac = np.arange(per_interval) / per_interval
        pts = (left[:, None] + width[:, None] * frac[None, :]).ravel()
        return np.append(pts, 0.0)

    def index_of_time(self, t: float, tol: float = 1e-12) -> int:
        """Index of the node equal to t; raises if t is not a node."""
        i = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[i] - t) > tol:
            raise ValueError(f"t={t} is not a grid node")
        return i


def _locate_many(grid: Grid, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ts = np.asarray(ts, dtype=float)
    if ts.size and (ts.min() < -grid.r - EVAL_SLACK or ts.max() > EVAL_SLACK):
        raise DomainError("some evaluation times outside [-r, 0]")
    ts = np.clip(ts, -grid.r, 0.0)
    idx = np.clip(np.searchsorted(grid.nodes, ts, side="right") - 1, 0, grid.m - 2)
    width = grid.nodes[idx + 1] - grid.nodes[idx]
    s = (ts - grid.nodes[idx]) / width
    return idx, s


@dataclass(eq=False)
class SegmentC1:
    """Piecewise-cubic C1 function on [-r, 0] given by Hermite node data."""

    grid: Grid
    values: np.ndarray  # (m, n)
    derivs: np.ndarray  # (m, n)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        d = np.atleast_2d(np.asarray(self.derivs, dtype=float))
        if v.shape[0] == 1 and self.grid.m != 1 and v.shape[1] == self.grid.m:
            v, d = v.T, d.T
        if v.shape != d.shape or v.shape[0] != self.grid.m or v.shape[1] < 1:
            raise ValueError("node data must be (m, n) with m matching the grid")
        self.values = _freeze(v)
        self.derivs = _freeze(d)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zeros(cls, grid: Grid, n: int = 1) -> "SegmentC1":
        return cls(grid, np.zeros((grid.m, n)), np.zeros((grid.m, n)))

    @classmethod
    def constant(cls, grid: Grid, c) -> "SegmentC1":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        m = grid.m
        return cls(grid, np.tile(c, (m, 1)), np.zeros((m, c.size)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable, dfn: Callable | None = None) -> "SegmentC1":
        """Sample ``fn`` (and its derivative) at the nodes.

        Without ``dfn`` the slopes come from second-order finite differences
        of ``fn``; prefer an analytic ``dfn`` when exact node data matter.
        """
        vals = np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float)
        if dfn is not None:
            ders = np.array([np.atleast_1d(dfn(t)) for t in grid.nodes], dtype=float)
        else:
            h = 1e-6 * max(1.0, grid.r)
            ders = np.empty_like(vals)
            for i, t in enumerate(grid.nodes):
                if t - h < -grid.r:
                    ders[i] = (-3 * fn(t) + 4 * fn(t + h) - fn(t + 2 * h)) / (2 * h)
                elif t + h > 0.0:
                    ders[i] = (3 * fn(t) - 4 * fn(t - h) + fn(t - 2 * h)) / (2 * h)
                else:
                    ders[i] = (np.atleast_1d(fn(t + h)) - np.atleast_1d(fn(t - h))) / (2 * h)
        return cls(grid, vals, ders)

    # -- basic queries -----------------------------------------------------

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def value_at_zero(self) -> np.ndarray:
        return self.values[-1]

    @property
    def deriv_at_zero(self) -> np.ndarray:
        return self.derivs[-1]

    def eval(self, t: float) -> np.ndarray:
        i = self.grid.locate(t)
        t0, t1 = self.grid.nodes[i], self.grid.nodes[i + 1]
        h = t1 - t0
        s = (self.grid.clamp_time(t) - t0) / h
        h00, h10, h01, h11 = _hermite_basis(s)
        return (
            h00 * self.values[i]
            + h01 * self.values[i + 1]
            + h * (h10 * self.derivs[i] + h11 * self.derivs[i + 1])
        )

    def eval_deriv(self, t: float) -> np.ndarray:
        i = self.grid.locate(t)
        t0, t1 = self.grid.nodes[i], self.grid.nodes[i + 1]
        h = t1 - t0
        s = (self.grid.clamp_time(t) - t0) / h
        d00, d10, d01, d11 = _hermite_basis_deriv(s)
        return (
            (d00 * self.values[i] + d01 * self.values[i + 1]) / h
            + d10 * self.derivs[i]
            + d11 * self.derivs[i + 1]
        )

    def eval_many(self, ts: np.ndarray) -> np.ndarray:
        idx, s = _locate_many(self.grid, ts)
        h = (self.grid.nodes[idx + 1] - self.grid.nodes[idx])[:, None]
        h00, h10, h01, h11 = _hermite_basis(s[:, None])
        return (
            h00 * self.values[idx]
            + h01 * self.values[idx + 1]
            + h * (h10 * self.derivs[idx] + h11 * self.derivs[idx + 1])
        )

    def eval_deriv_many(self, ts: np.ndarray) -> np.ndarray:
        idx, s = _locate_many(self.grid, ts)
        h = (self.grid.nodes[idx + 1] - self.grid.nodes[idx])[:, None]
        d00, d10, d01, d11 = _hermite_basis_deriv(s[:, None])
        return (
            (d00 * self.values[idx] + d01 * self.values[idx + 1]) / h
            + d10 * self.derivs[idx]
            + d11 * self.derivs[idx + 1]
        )

    # -- norms (sampled sup norms; see module docs) --------------------------

    def norm_c0(self, per_interval: int = 8) -> float:
        ts = self.grid.sample_times(per_interval)
        return float(np.max(np.abs(self.eval_many(ts))))

    def norm_c1(self, per_interval: int = 8) -> float:
        ts = self.grid.sample_times(per_interval)
        return float(
            np.max(np.abs(self.eval_many(ts))) + np.max(np.abs(self.eval_deriv_many(ts)))
        )

    # -- linear structure ----------------------------------------------------

    def _check_compatible(self, other: "SegmentC1"):
        self.grid.require_same(other.grid)
        if self.n != other.n:
            raise GridMismatchError("segments must have matching component counts")

    def __add__(self, other: "SegmentC1") -> "SegmentC1":
        self._check_compatible(other)
        return SegmentC1(self.grid, self.values + other.values, self.derivs + other.derivs)

    def __sub__(self, other: "SegmentC1") -> "SegmentC1":
        self._check_compatible(other)
        return SegmentC1(self.grid, self.values - other.values, self.derivs - other.derivs)

    def __mul__(self, c: float) -> "SegmentC1":
        c = float(c)
        return SegmentC1(self.grid, c * self.values, c * self.derivs)

    __rmul__ = __mul__

    def __neg__(self) -> "SegmentC1":
        return self * -1.0

    def component(self, j: int) -> "SegmentC1":
        return SegmentC1(self.grid, self.values[:, [j]], self.derivs[:, [j]])

    def as_c0(self) -> "SegmentC0":
        return SegmentC0(self.grid, self.values)

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        expected = np.linspace(-self.grid.r, 0.0, self.grid.m)
        if not np.array_equal(self.grid.nodes, expected):
            raise ValueError("only uniform-grid segments serialize to JSON")
        return {
            "grid": {"r": self.grid.r, "M": self.grid.m},
            "n": self.n,
            "values": self.values.tolist(),
            "derivs": self.derivs.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SegmentC1":
        grid = Grid.uniform(doc["grid"]["r"], doc["grid"]["M"])
        seg = cls(grid, np.asarray(doc["values"]), np.asarray(doc["derivs"]))
        if seg.n != doc["n"]:
            raise ValueError("component count mismatch in segment document")
        return seg

    @classmethod
    def from_json(cls, text: str) -> "SegmentC1":
        return cls.from_json_dict(json.loads(text))

    def csv_text(self, per_interval: int = 4) -> str:
        ts = self.grid.sample_times(per_interval)
        vals = self.eval_many(ts)
        ders = self.eval_deriv_many(ts)
        head = ["t"]
        head += [f"x{j + 1}" for j in range(self.n)]
        head += [f"dx{j + 1}" for j in range(self.n)]
        lines = [",".join(head)]
        for t, v, d in zip(ts, vals, ders):
            row = [repr(float(t))] + [repr(float(x)) for x in v] + [repr(float(x)) for x in d]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


@dataclass(eq=False)
class SegmentC0:
    """Piecewise-linear continuous function on [-r, 0] (node values only)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape[0] == 1 and v.shape[1] == self.grid.m and self.grid.m != 1:
            v = v.T
        if v.shape[0] != self.grid.m:
            raise ValueError("node data must have one row per grid node")
        self.values = _freeze(v)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid: Grid, n: int = 1) -> "SegmentC0":
        return cls(grid, np.zeros((grid.m, n)))

    def eval(self, t: float) -> np.ndarray:
        i = self.grid.locate(t)
        t0, t1 = self.grid.nodes[i], self.grid.nodes[i + 1]
        s = (self.grid.clamp_time(t) - t0) / (t1 - t0)
        return (1.0 - s) * self.values[i] + s * self.values[i + 1]

    def eval_many(self, ts: np.ndarray) -> np.ndarray:
        idx, s = _locate_many(self.grid, ts)
        return (1.0 - s[:, None]) * self.values[idx] + s[:, None] * self.values[idx + 1]

    def __add__(self, other: "SegmentC0") -> "SegmentC0":
        self.grid.require_same(other.grid)
        return SegmentC0(self.grid, self.values + other.values)

    def __mul__(self, c: float) -> "SegmentC0":
        return SegmentC0(self.grid, float(c) * self.values)

    __rmul__ = __mul__


def scalar_times_basis(psi: SegmentC1, component: int, n: int) -> SegmentC1:
    """Place the scalar segment ``psi`` in the given component of R^n (others 0)."""
    if psi.n != 1:
        raise ValueError("psi must be a scalar segment")
    if not 0 <= component < n:
        raise IndexError(f"component {component} out of range for n={n}")
    values = np.zeros((psi.grid.m, n))
    derivs = np.zeros((psi.grid.m, n))
    values[:, component] = psi.values[:, 0]
    derivs[:, component] = psi.derivs[:, 0]
    return SegmentC1(psi.grid, values, derivs)


@dataclass(eq=False)
class MatSegmentC1:
    """n-by-n matrix of scalar C1 segments; columns are SegmentC1 of n components."""

    grid: Grid
    values: np.ndarray  # (m, n, n)
    derivs: np.ndarray  # (m, n, n)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        d = np.asarray(self.derivs, dtype=float)
        if v.ndim != 3 or v.shape != d.shape or v.shape[0] != self.grid.m or v.shape[1] != v.shape[2]:
            raise ValueError("matrix node data must be (m, n, n)")
        self.values = _freeze(v)
        self.derivs = _freeze(d)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_columns(cls, columns: Sequence[SegmentC1]) -> "MatSegmentC1":
        n = len(columns)
        grid = columns[0].grid
        values = np.zeros((grid.m, n, n))
        derivs = np.zeros((grid.m, n, n))
        for j, col in enumerate(columns):
            grid.require_same(col.grid)
            if col.n != n:
                raise ValueError("each column must have n components")
            values[:, :, j] = col.values
            derivs[:, :, j] = col.derivs
        return cls(grid, values, derivs)

    @classmethod
    def from_diag(cls, scalars: Sequence[SegmentC1]) -> "MatSegmentC1":
        n = len(scalars)
        grid = scalars[0].grid
        values = np.zeros((grid.m, n, n))
        derivs = np.zeros((grid.m, n, n))
        for j, s in enumerate(scalars):
            grid.require_same(s.grid)
            if s.n != 1:
                raise ValueError("diagonal entries must be scalar segments")
            values[:, j, j] = s.values[:, 0]
            derivs[:, j, j] = s.derivs[:, 0]
        return cls(grid, values, derivs)

    def column(self, j: int) -> SegmentC1:
        return SegmentC1(self.grid, self.values[:, :, j], self.derivs[:, :, j])

    def apply(self, q: np.ndarray) -> SegmentC1:
        """The segment A . q = sum_j q_j A_j (pointwise matrix-vector product)."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ValueError(f"q must have shape ({self.n},)")
        return SegmentC1(self.grid, self.values @ q, self.derivs @ q)

    def eval_mat(self, t: float) -> np.ndarray:
        i = self.grid.locate(t)
        t0, t1 = self.grid.nodes[i], self.grid.nodes[i + 1]
        h = t1 - t0
        s = (self.grid.clamp_time(t) - t0) / h
        h00, h10, h01, h11 = _hermite_basis(s)
        return (
            h00 * self.values[i]
            + h01 * self.values[i + 1]
            + h * (h10 * self.derivs[i] + h11 * self.derivs[i + 1])
        )
