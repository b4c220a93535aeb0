"""Chart over the stratum where every delay vanishes.

The frame ``Y_K`` is a diagonal matrix segment whose columns are bump
segments placed per component: it has value 0 and slope identity at t = 0 and
is annihilated by L.  The chart map is the linear projection

    R_K(phi) = phi - Y_K . phi'(0)

onto the flat subspace {phi'(0) = 0}; its inverse on chart images solves the
n-dimensional fixed point x = f(chi + Y_K . x).  The straightening map

    A_K(phi) = phi - (id - R_K)(R_K^{-1}(R_K phi))

is a diffeomorphism of the chart's ambient neighbourhood that carries the
solution set onto the flat subspace while fixing points that are already
flat.  Chart-domain membership is operational: a point is accepted when the
fixed-point solve converges and the round trip closes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bumps import make_component_bump
from .errors import OutsideDomainError
from .model import Model
from .segments import MatSegmentC1, SegmentC1
from .solvers import SolveResult, SolverSettings, solve_derivative_value

FLAT_TOL = 1e-8  # how flat a chart-image argument must be at t = 0


@dataclass(eq=False)
class FrameK:
    matrix: MatSegmentC1  # diagonal; column j is psi_j placed in component j
    z: float
    certificates: tuple = ()

    def apply(self, x: np.ndarray) -> SegmentC1:
        return self.matrix.apply(x)

    def column(self, j: int) -> SegmentC1:
        return self.matrix.column(j)

    def report(self) -> dict:
        return {
            "kind": "frame_k",
            "z": self.z,
            "bump_certificates": [c.to_dict() for c in self.certificates],
        }


def build_frame_k(model: Model, z: float | None = None) -> FrameK:
    """Frame columns from one bump per component, annihilated by L.

    ``z`` defaults to -r/2; any z in (-r, 0) with enough grid nodes to the
    right works.
    """
    z = -model.r / 2.0 if z is None else float(z)
    if not -model.r < z < 0.0:
        raise ValueError("z must lie in (-r, 0)")
    bumps = [make_component_bump(model, j, z) for j in range(model.n)]
    matrix = MatSegmentC1.from_diag([b.segment for b in bumps])
    return FrameK(matrix=matrix, z=z, certificates=tuple(b.certificate for b in bumps))


@dataclass(eq=False)
class ChartK:
    model: Model
    frame: FrameK
    settings: SolverSettings = field(default_factory=SolverSettings)

    def project(self, phi: SegmentC1) -> SegmentC1:
        """R_K(phi); lands exactly flat at t = 0 in stored node data."""
        return phi - self.frame.apply(phi.deriv_at_zero)

    def invert_with_info(
        self, chi: SegmentC1, x0: np.ndarray | None = None
    ) -> tuple[SegmentC1, SolveResult]:
        if float(np.max(np.abs(chi.deriv_at_zero))) > FLAT_TOL:
            raise ValueError("chart inversion expects a flat segment (chi'(0) = 0)")
        info = solve_derivative_value(
            self.model, self.frame.matrix, chi, x0=x0, settings=self.settings
        )
        return chi + self.frame.apply(info.x), info

    def invert(self, chi: SegmentC1, x0: np.ndarray | None = None) -> SegmentC1:
        return self.invert_with_info(chi, x0)[0]

    def tangent_lift(self, phi: SegmentC1, eta: SegmentC1) -> SegmentC1:
        """Tangent vector over phi projecting to the flat direction eta.

        On this stratum every delayed evaluation sits at t = 0, so the frame
        correction is x = Df(phi) eta and the lift is eta + Y_K . x.
        """
        mem = self.model.membership(phi)
        if mem is None or not mem.is_full:
            raise OutsideDomainError("U", "tangent lift needs a point of the all-zero stratum")
        if float(np.max(np.abs(eta.deriv_at_zero))) > FLAT_TOL:
            raise ValueError("eta must be flat at t = 0")
        x = self.model.df(phi, eta)
        return eta + self.frame.apply(x)

    def almost_graph(self, phi: SegmentC1) -> SegmentC1:
        """A_K(phi) = phi - (id - R_K)(R_K^{-1}(R_K phi))."""
        chi = self.project(phi)
        psi, _ = self.invert_with_info(chi)
        return phi - self.frame.apply(psi.deriv_at_zero)

    def almost_graph_inverse(self, rho: SegmentC1) -> SegmentC1:
        chi = self.project(rho)
        psi, _ = self.invert_with_info(chi)
        return rho + self.frame.apply(psi.deriv_at_zero)
