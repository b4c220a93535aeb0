"""Constructive bump segments.

Given a finite-rank linear functional lam on scalar segments and z in [-r, 0),
``make_bump`` produces a scalar C1 segment phi with

    phi'(0) = 1,   lam(phi) = 0,   phi = 0 on [-r, z] and at 0,

certifying each property numerically.  The candidate basis consists of
"tent cubics" (unit value at one interior node, zero derivative everywhere,
zero at all other nodes) plus one segment carrying derivative 1 at the last
node and value 0 everywhere.  Tents are restricted to nodes right of z, so the
vanishing conditions hold exactly by construction and only the functional
rows and the unit-slope row need solving.  Coefficients are the minimum-norm
least-squares solution, which makes the construction deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BumpInfeasibleError
from .model import Model
from .segments import Grid, SegmentC1, scalar_times_basis

CERT_TOL = 1e-10


@dataclass(eq=False)
class BumpRequest:
    grid: Grid
    functional: Callable[[SegmentC1], np.ndarray]  # scalar segment -> (q,)
    q: int
    z: float
    budget: int = 128

    def __post_init__(self):
        if not -self.grid.r <= self.z < 0.0:
            raise ValueError("z must lie in [-r, 0)")
        if self.q < 0:
            raise ValueError("functional rank must be nonnegative")


@dataclass(eq=False)
class BumpCertificate:
    deriv_at_zero: float      # |phi'(0) - 1|
    functional: float         # max |lam(phi)|
    left_tail: float          # max |phi| on [-r, z]
    value_at_zero: float      # |phi(0)|

    @property
    def max_residual(self) -> float:
        return max(self.deriv_at_zero, self.functional, self.left_tail, self.value_at_zero)

    def to_dict(self) -> dict:
        return {
            "deriv_at_zero": self.deriv_at_zero,
            "functional": self.functional,
            "left_tail": self.left_tail,
            "value_at_zero": self.value_at_zero,
        }


@dataclass(eq=False)
class Bump:
    segment: SegmentC1  # scalar
    certificate: BumpCertificate
    z: float
    support_start: float  # first grid node >= z; the segment vanishes left of it


def _tent(grid: Grid, i: int) -> SegmentC1:
    values = np.zeros((grid.m, 1))
    values[i, 0] = 1.0
    return SegmentC1(grid, values, np.zeros((grid.m, 1)))


def _slope_carrier(grid: Grid) -> SegmentC1:
    derivs = np.zeros((grid.m, 1))
    derivs[-1, 0] = 1.0
    return SegmentC1(grid, np.zeros((grid.m, 1)), derivs)


def make_bump(req: BumpRequest) -> Bump:
    grid = req.grid
    # Snap the support boundary to the grid so "zero on [-r, z]" holds exactly.
    i_z = int(np.searchsorted(grid.nodes, req.z, side="left"))
    z_star = float(grid.nodes[i_z])
    tent_nodes = list(range(i_z + 1, grid.m - 1))
    if len(tent_nodes) > req.budget:
        tent_nodes = tent_nodes[-req.budget:]
    if len(tent_nodes) + 1 < req.q + 2:
        raise BumpInfeasibleError(
            "grid_too_coarse",
            f"only {len(tent_nodes)} interior nodes in ({z_star}, 0) for a "
            f"rank-{req.q} functional; refine the grid",
        )

    candidates = [_slope_carrier(grid)] + [_tent(grid, i) for i in tent_nodes]
    rows = np.zeros((req.q + 1, len(candidates)))
    rhs = np.zeros(req.q + 1)
    rows[0, 0] = 1.0  # unit slope at 0 comes only from the carrier
    rhs[0] = 1.0
    if req.q:
        for j, cand in enumerate(candidates):
            rows[1:, j] = np.atleast_1d(req.functional(cand))

    coeffs, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    if abs(coeffs[0]) < 1e-8:
        raise BumpInfeasibleError("infeasible_rank", "unit-slope row lost in the solve")
    # Rescale so the stored slope at 0 is exactly 1.
    coeffs = coeffs / coeffs[0]
    if np.max(np.abs(rows @ coeffs - rhs)) > 1e-9:
        raise BumpInfeasibleError(
            "infeasible_rank",
            "constraint system has no solution at this grid resolution",
        )

    values = np.zeros((grid.m, 1))
    derivs = np.zeros((grid.m, 1))
    derivs[-1, 0] = coeffs[0]
    for c, i in zip(coeffs[1:], tent_nodes):
        values[i, 0] = c
    seg = SegmentC1(grid, values, derivs)

    lam_res = 0.0
    if req.q:
        lam_res = float(np.max(np.abs(np.atleast_1d(req.functional(seg)))))
    left = grid.nodes[grid.nodes <= req.z]
    tail = 0.0
    if left.size:
        probes = np.unique(np.concatenate([left, np.linspace(-grid.r, req.z, 33)]))
        tail = float(np.max(np.abs(seg.eval_many(probes))))
    cert = BumpCertificate(
        deriv_at_zero=abs(float(seg.derivs[-1, 0]) - 1.0),
        functional=lam_res,
        left_tail=tail,
        value_at_zero=abs(float(seg.values[-1, 0])),
    )
    if cert.max_residual > CERT_TOL:
        raise BumpInfeasibleError(
            "infeasible_rank", f"certificate residual {cert.max_residual:.2e} above {CERT_TOL}"
        )
    return Bump(segment=seg, certificate=cert, z=req.z, support_start=z_star)


def make_component_bump(model: Model, component: int, z: float) -> Bump:
    """Scalar bump whose embedding in the given component is annihilated by L."""
    if not 0 <= component < model.n:
        raise IndexError(f"component {component} out of range for n={model.n}")

    def lam(psi: SegmentC1) -> np.ndarray:
        return model.lmap.apply(scalar_times_basis(psi, component, model.n))

    req = BumpRequest(grid=model.grid, functional=lam, q=model.dim_f, z=z)
    return make_bump(req)


def make_vector_bump(model: Model, component: int, z: float) -> SegmentC1:
    """The n-component segment eta . e_component built from a component bump."""
    bump = make_component_bump(model, component, z)
    return scalar_times_basis(bump.segment, component, model.n)
