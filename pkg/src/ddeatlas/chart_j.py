"""Chart over a stratum with at least one nonvanishing delay.

Here the complement of the flat subspace must rotate with the point: the
frame ``Y_J(w)`` depends on w = L(phi) and its columns must vanish on
[-r, -d_k(w)] for every delay k outside the stratum, on top of the value-0 /
slope-1 / L-annihilation conditions shared with the all-zero-delays chart.

The w-dependence is realized as a C1 blend over a finite ladder of bump
levels.  Level i carries one bump per component vanishing on
[-r, -delta_i], with thresholds delta_0 > delta_1 > ... decreasing
geometrically.  A C1 proxy p(w) for the smallest positive delay (the delay
itself when there is a single one outside the stratum, otherwise a sharp
softmin, which is a lower bound for the true minimum) drives quintic
smoothstep cutoffs a_i placed on disjoint bands [delta_i, sqrt(ratio)
delta_i]:

    y(w) = psi_0 + sum_i a_i(w) (psi_{i+1} - psi_i).

A level-i bump can have nonzero weight only where p(w) > delta_i, and since
p never exceeds the true minimum delay, every active bump vanishes on
[-r, -d_k(w)] as required.  The blend telescopes so at any w at most two
consecutive levels are active, mirroring a compact-exhaustion construction
with finitely many levels over a declared coverage box.  Consecutive-level
differences have value 0, slope 0 at t = 0 and are L-annihilated, so the
w-derivative of the frame satisfies the same three identities exactly.

The chart map is R_J(phi) = phi - Y_J(L phi) . phi'(0).  Because
L(Y_J(w) . x) = 0, inversion again freezes the L-value and reduces to the
n-dimensional fixed point x = f(chi + Y_J(L chi) . x).  Unlike the all-zero
chart, R_J is not a projection, and no neighbourhood of the stratum needs to
be a graph over the flat subspace: the package therefore never fits a linear
graph here and reports the straightening offset instead.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .bumps import make_component_bump
from .errors import OutsideDomainError
from .model import DelaySet, Model
from .segments import MatSegmentC1, SegmentC1
from .solvers import SolveResult, SolverSettings, solve_derivative_value

FLAT_TOL = 1e-8
_CACHE_CAP = 4096


def min_positive_delay(model: Model, stratum: DelaySet, w: np.ndarray) -> float:
    """Smallest delay outside the stratum at w (the function d^J)."""
    if stratum.is_full:
        raise ValueError("all delays vanish on this stratum; use the projection chart")
    if not model.w_domain.contains(np.atleast_1d(w)):
        raise OutsideDomainError("W")
    return min(float(model.delays[k].fn(np.atleast_1d(w))) for k in stratum.complement_indices)


def _smoothstep(u: float) -> float:
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


def _smoothstep_deriv(u: float) -> float:
    if u <= 0.0 or u >= 1.0:
        return 0.0
    return 30.0 * u * u * (1.0 - u) * (1.0 - u)


def _box_lattice(lo: np.ndarray, hi: np.ndarray, per_dim: int = 9) -> np.ndarray:
    axes = [np.linspace(a, b, per_dim) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*axes)))


@dataclass(eq=False)
class FrameJ:
    model: Model
    stratum: DelaySet
    box: tuple[np.ndarray, np.ndarray]
    thresholds: np.ndarray          # (levels,) strictly decreasing
    bands: np.ndarray               # (levels-1, 2) cutoff bands (lo, hi) in proxy value
    bumps: tuple                    # bumps[level][component] -> scalar SegmentC1
    certificates: tuple
    beta: float
    sample_stats: dict

    def __post_init__(self):
        self._cache: dict[bytes, MatSegmentC1] = {}
        self._lock = threading.Lock()

    # -- proxy for the smallest positive delay --------------------------------

    def proxy(self, w: np.ndarray) -> float:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        ks = self.stratum.complement_indices
        if len(ks) == 1:
            return float(self.model.delays[ks[0]].fn(w))
        d = np.array([float(self.model.delays[k].fn(w)) for k in ks])
        # softmin: a C1 lower bound of min(d) within log(len)/beta of it
        m = d.min()
        return float(m - np.log(np.sum(np.exp(-self.beta * (d - m)))) / self.beta)

    def proxy_grad(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        ks = self.stratum.complement_indices
        if len(ks) == 1:
            return np.atleast_1d(self.model.delays[ks[0]].grad(w))
        d = np.array([float(self.model.delays[k].fn(w)) for k in ks])
        m = d.min()
        ex = np.exp(-self.beta * (d - m))
        weights = ex / ex.sum()
        out = np.zeros(w.size)
        for wt, k in zip(weights, ks):
            out += wt * np.atleast_1d(self.model.delays[k].grad(w))
        return out

    # -- cutoffs ----------------------------------------------------------------

    def cutoffs(self, w: np.ndarray) -> np.ndarray:
        p = self.proxy(w)
        return np.array(
            [_smoothstep((hi - p) / (hi - lo)) for lo, hi in self.bands]
        )

    def cutoff_grads(self, w: np.ndarray) -> np.ndarray:
        p = self.proxy(w)
        gp = self.proxy_grad(w)
        out = np.zeros((len(self.bands), gp.size))
        for i, (lo, hi) in enumerate(self.bands):
            u = (hi - p) / (hi - lo)
            out[i] = -_smoothstep_deriv(u) / (hi - lo) * gp
        return out

    # -- frame evaluation ---------------------------------------------------------

    def contains(self, w: np.ndarray) -> bool:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        lo, hi = self.box
        return bool(np.all(w >= lo - 1e-12) and np.all(w <= hi + 1e-12))

    def _require_w(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if not self.contains(w):
            raise OutsideDomainError("box", "L-value outside the frame coverage box")
        return w

    def matrix_at(self, w: np.ndarray) -> MatSegmentC1:
        w = self._require_w(w)
        key = w.tobytes()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        a = self.cutoffs(w)
        scalars = []
        for comp in range(self.model.n):
            seg = self.bumps[0][comp]
            for i, ai in enumerate(a):
                if ai != 0.0:
                    seg = seg + ai * (self.bumps[i + 1][comp] - self.bumps[i][comp])
            scalars.append(seg)
        mat = MatSegmentC1.from_diag(scalars)
        with self._lock:
            if len(self._cache) >= _CACHE_CAP:
                self._cache.clear()
            self._cache.setdefault(key, mat)
            return self._cache[key]

    def derivative_matrix(self, w: np.ndarray, w_dir: np.ndarray) -> MatSegmentC1:
        """Directional derivative of w -> Y_J(w) along w_dir (analytic)."""
        w = self._require_w(w)
        w_dir = np.atleast_1d(np.asarray(w_dir, dtype=float))
        coeff = self.cutoff_grads(w) @ w_dir
        scalars = []
        for comp in range(self.model.n):
            seg = SegmentC1.zeros(self.model.grid, 1)
            for i, ci in enumerate(coeff):
                if ci != 0.0:
                    seg = seg + ci * (self.bumps[i + 1][comp] - self.bumps[i][comp])
            scalars.append(seg)
        return MatSegmentC1.from_diag(scalars)

    def report(self) -> dict:
        return {
            "kind": "frame_j",
            "stratum": self.stratum.token,
            "box": {"lo": self.box[0].tolist(), "hi": self.box[1].tolist()},
            "thresholds": self.thresholds.tolist(),
            "bands": self.bands.tolist(),
            "softmin_sharpness": self.beta,
            "sample_stats": self.sample_stats,
            "bump_certificates": [
                [c.to_dict() for c in level] for level in self.certificates
            ],
        }


def build_frame_j(
    model: Model,
    stratum: DelaySet,
    box: tuple[np.ndarray, np.ndarray],
    ratio: float = 2.0,
    beta: float = 50.0,
    lattice_per_dim: int = 9,
) -> FrameJ:
    if stratum.is_full:
        raise ValueError("use build_frame_k for the all-zero-delays stratum")
    if stratum.size != model.num_delays:
        raise ValueError("stratum size does not match the model")
    lo = np.atleast_1d(np.asarray(box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(box[1], dtype=float))
    if lo.shape != hi.shape or lo.shape != (model.dim_f,) or np.any(lo >= hi):
        raise ValueError("coverage box must be a nondegenerate box in R^dim_f")

    outside = sorted(stratum.complement_indices)
    n_out = len(outside)
    bias = math.log(n_out) / beta if n_out > 1 else 0.0

    pts = _box_lattice(lo, hi, lattice_per_dim)
    d_min, d_max = math.inf, -math.inf
    p_min, p_max = math.inf, -math.inf
    for w in pts:
        if not model.w_domain.contains(w):
            raise OutsideDomainError("W", "coverage box leaves the admissible set W")
        ds = [float(model.delays[k].fn(w)) for k in outside]
        m = min(ds)
        d_min, d_max = min(d_min, m), max(d_max, m)
        if n_out == 1:
            p = m
        else:
            p = m - math.log(sum(math.exp(-beta * (d - m)) for d in ds)) / beta
        p_min, p_max = min(p_min, p), max(p_max, p)
    # Margin: sampled minima must clear the softmin bias comfortably,
    # otherwise the box cannot be certified to avoid the stratum boundary.
    if d_min <= max(4.0 * bias, 1e-6):
        raise OutsideDomainError(
            "box_not_in_WJ",
            f"smallest positive delay on the box is {d_min:.3e}; the box "
            "touches the stratum boundary",
        )

    # Thresholds span [d_min/2, r] geometrically; the floor stays above the
    # sampled proxy minimum (the box margin check guarantees the bias gap).
    delta_last = min(d_min, p_min) / 2.0
    delta_first = model.r
    if delta_last >= delta_first:
        levels = 1
        thresholds = np.array([delta_last])
        bands = np.zeros((0, 2))
    else:
        levels = 1 + max(1, math.ceil(math.log(delta_first / delta_last) / math.log(ratio) - 1e-12))
        thresholds = delta_first * (delta_last / delta_first) ** (np.arange(levels) / (levels - 1))
        eff_half = math.sqrt(thresholds[0] / thresholds[1])
        bands = np.array([[t, t * eff_half] for t in thresholds[:-1]])

    bump_levels = []
    cert_levels = []
    for t in thresholds:
        row = [make_component_bump(model, comp, -float(t)) for comp in range(model.n)]
        bump_levels.append(tuple(b.segment for b in row))
        cert_levels.append(tuple(b.certificate for b in row))

    return FrameJ(
        model=model,
        stratum=stratum,
        box=(lo, hi),
        thresholds=thresholds,
        bands=bands,
        bumps=tuple(bump_levels),
        certificates=tuple(cert_levels),
        beta=beta,
        sample_stats={
            "d_min": d_min,
            "d_max": d_max,
            "proxy_min": p_min,
            "proxy_max": p_max,
            "softmin_bias_bound": bias,
            "lattice_points": len(pts),
        },
    )


@dataclass(eq=False)
class ChartJ:
    model: Model
    frame: FrameJ
    settings: SolverSettings = field(default_factory=SolverSettings)

    @property
    def stratum(self) -> DelaySet:
        return self.frame.stratum

    def project(self, phi: SegmentC1) -> SegmentC1:
        """R_J(phi) = phi - Y_J(L phi) . phi'(0)."""
        w = self.model.lmap.apply(phi)
        return phi - self.frame.matrix_at(w).apply(phi.deriv_at_zero)

    def derivative(self, phi: SegmentC1, chi: SegmentC1) -> SegmentC1:
        """DR_J(phi) chi, with both frame terms evaluated in closed form."""
        w = self.model.lmap.apply(phi)
        l_chi = self.model.lmap.apply(chi)
        out = chi - self.frame.derivative_matrix(w, l_chi).apply(phi.deriv_at_zero)
        return out - self.frame.matrix_at(w).apply(chi.deriv_at_zero)

    def invert_with_info(
        self, chi: SegmentC1, x0: np.ndarray | None = None
    ) -> tuple[SegmentC1, SolveResult]:
        if float(np.max(np.abs(chi.deriv_at_zero))) > FLAT_TOL:
            raise ValueError("chart inversion expects a flat segment (chi'(0) = 0)")
        w = self.model.lmap.apply(chi)
        frame_mat = self.frame.matrix_at(w)  # L-value frozen along the iteration
        info = solve_derivative_value(self.model, frame_mat, chi, x0=x0, settings=self.settings)
        return chi + frame_mat.apply(info.x), info

    def invert(self, chi: SegmentC1, x0: np.ndarray | None = None) -> SegmentC1:
        return self.invert_with_info(chi, x0)[0]

    def tangent_lift(self, phi: SegmentC1, eta: SegmentC1) -> SegmentC1:
        """Tangent vector over phi whose chart derivative is the flat eta.

        The lift is zeta + Y_J(L phi) . x with
        zeta = eta + (DY_J(L phi) L eta) . phi'(0) and x = Df(phi) zeta: the
        frame column added on top of zeta changes neither the L-value nor any
        delayed evaluation, so the linearized compatibility condition closes.
        """
        mem = self.model.membership(phi)
        if mem != self.stratum:
            raise OutsideDomainError("U", "tangent lift needs a point of this stratum")
        if float(np.max(np.abs(eta.deriv_at_zero))) > FLAT_TOL:
            raise ValueError("eta must be flat at t = 0")
        w = self.model.lmap.apply(phi)
        l_eta = self.model.lmap.apply(eta)
        zeta = eta + self.frame.derivative_matrix(w, l_eta).apply(phi.deriv_at_zero)
        x = self.model.df(phi, zeta)
        return zeta + self.frame.matrix_at(w).apply(x)

    def almost_graph(self, phi: SegmentC1) -> SegmentC1:
        """A_J(phi) = phi - Y_J(L phi) . f(R_J^{-1}(R_J phi))."""
        w = self.model.lmap.apply(phi)
        chi = phi - self.frame.matrix_at(w).apply(phi.deriv_at_zero)
        psi, _ = self.invert_with_info(chi)
        return phi - self.frame.matrix_at(w).apply(self.model.rhs_f(psi))

    def almost_graph_inverse(self, rho: SegmentC1) -> SegmentC1:
        w = self.model.lmap.apply(rho)
        chi = rho - self.frame.matrix_at(w).apply(rho.deriv_at_zero)
        psi, _ = self.invert_with_info(chi)
        return rho + self.frame.matrix_at(w).apply(self.model.rhs_f(psi))

    def straightening_offset(self, chi: SegmentC1) -> SegmentC1:
        """The offset Y_J(L chi) . f(R_J^{-1}(chi)) of the graph-like representation.

        Zero exactly on flat manifold points; otherwise it leaves the flat
        subspace (its slope at 0 is f at the inverted point).
        """
        psi, _ = self.invert_with_info(chi)
        w = self.model.lmap.apply(chi)
        return self.frame.matrix_at(w).apply(self.model.rhs_f(psi))
