"""Delay system definition and the right-hand side on history segments.

A ``Model`` packages the ingredients of a system

    x'(t) = g(x(t - d_1(L x_t)), ..., x(t - d_k(L x_t)))

namely the continuous linear map L into R^{dim_f}, the delay functions d_i
with values in [0, r], and the C1 map g on (R^n)^k.  On history segments this
induces f(phi) = g(hat(phi)) with hat(phi)_i = phi(-d_i(L phi)), defined on
U = {phi : L phi in W, hat(phi) in V}.  The solution set
{phi in U : phi'(0) = f(phi)} is the manifold all chart modules operate on.

The directional derivative implemented in :meth:`Model.df` is, component-wise,

    sum_i sum_j dg[mu, i*n+j] * (chi_j(-d_i(w)) - phi_j'(-d_i(w)) * <grad d_i(w), L chi>)

with w = L phi.  The formula uses only values of chi (never chi'), so it
extends verbatim to merely continuous perturbations (:meth:`Model.df_ext`).

Delays are indexed from 0 throughout; a ``DelaySet`` names the subset of
delays that vanish at a given point of R^{dim_f}, which stratifies both W and
the solution manifold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ModelValidationError, OutsideDomainError
from .segments import Grid, SegmentC0, SegmentC1

ZERO_TOL_DEFAULT = 1e-9


@dataclass(frozen=True)
class DelaySet:
    """Subset of the delay indices {0, ..., k-1}, stored as a bitmask."""

    mask: int
    size: int

    def __post_init__(self):
        if self.size < 1 or self.mask < 0 or self.mask >= (1 << self.size):
            raise ValueError("invalid delay subset")

    @classmethod
    def from_indices(cls, indices, size: int) -> "DelaySet":
        mask = 0
        for i in indices:
            if not 0 <= i < size:
                raise ValueError(f"delay index {i} out of range")
            mask |= 1 << i
        return cls(mask, size)

    @classmethod
    def empty(cls, size: int) -> "DelaySet":
        return cls(0, size)

    @classmethod
    def full(cls, size: int) -> "DelaySet":
        return cls((1 << size) - 1, size)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.size) if self.mask >> i & 1)

    @property
    def complement_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.size) if not self.mask >> i & 1)

    @property
    def is_full(self) -> bool:
        return self.mask == (1 << self.size) - 1

    @property
    def is_empty(self) -> bool:
        return self.mask == 0

    def __contains__(self, i: int) -> bool:
        return 0 <= i < self.size and bool(self.mask >> i & 1)

    def __len__(self) -> int:
        return self.mask.bit_count()

    @property
    def token(self) -> str:
        """Filesystem/CSV-safe name, e.g. ``"none"``, ``"0"``, ``"0+1"``."""
        return "none" if self.is_empty else "+".join(str(i) for i in self.indices)

    @classmethod
    def from_token(cls, token: str, size: int) -> "DelaySet":
        if token == "none":
            return cls.empty(size)
        return cls.from_indices((int(p) for p in token.split("+")), size)

    def __str__(self) -> str:
        return "{" + ",".join(str(i) for i in self.indices) + "}"


@dataclass(eq=False)
class LinearMapL:
    """Continuous linear map from segments into R^{dim_f}.

    The map is a finite sum of weighted point evaluations plus an optional
    node-sampled integral kernel (trapezoid rule on the grid), so it is
    defined and exactly linear on both C0 and C1 segments.
    """

    dim_f: int
    n: int
    point_terms: tuple = ()
    quad_kernel: np.ndarray | None = None  # (m, dim_f, n)
    grid: Grid | None = None

    def __post_init__(self):
        terms = []
        for weight, tau in self.point_terms:
            w = np.asarray(weight, dtype=float)
            if w.shape != (self.dim_f, self.n):
                raise ValueError(f"point weight must be ({self.dim_f}, {self.n})")
            terms.append((w, float(tau)))
        self.point_terms = tuple(terms)
        if self.quad_kernel is not None:
            if self.grid is None:
                raise ValueError("quadrature kernel requires the grid")
            k = np.asarray(self.quad_kernel, dtype=float)
            if k.shape != (self.grid.m, self.dim_f, self.n):
                raise ValueError("quadrature kernel must be (m, dim_f, n)")
            self.quad_kernel = k
            d = np.diff(self.grid.nodes)
            w = np.zeros(self.grid.m)
            w[:-1] += d / 2.0
            w[1:] += d / 2.0
            self._quad_node_weights = w
        else:
            self._quad_node_weights = None

    def apply(self, seg: SegmentC1 | SegmentC0) -> np.ndarray:
        out = np.zeros(self.dim_f)
        for w, tau in self.point_terms:
            out += w @ seg.eval(tau)
        if self.quad_kernel is not None:
            self.grid.require_same(seg.grid)
            out += np.einsum("i,ifn,in->f", self._quad_node_weights, self.quad_kernel, seg.values)
        return out

    def apply_values_fn(self, value_at: Callable[[float], np.ndarray]) -> np.ndarray:
        """Apply to a history given only as a callable on [-r, 0]."""
        out = np.zeros(self.dim_f)
        for w, tau in self.point_terms:
            out += w @ np.atleast_1d(value_at(tau))
        if self.quad_kernel is not None:
            vals = np.array([np.atleast_1d(value_at(t)) for t in self.grid.nodes])
            out += np.einsum("i,ifn,in->f", self._quad_node_weights, self.quad_kernel, vals)
        return out


@dataclass(eq=False)
class DelayFn:
    """One delay d: R^{dim_f} -> [0, r] with its gradient."""

    fn: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class RhsG:
    """The map g on (R^n)^k, its Jacobian, and an optional global bound."""

    fn: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    bound: float | None = None


@dataclass(eq=False)
class Domain:
    """Membership predicate plus a bounding box used for sampling checks."""

    contains: Callable[[np.ndarray], bool]
    box: tuple[np.ndarray, np.ndarray] | None = None

    @classmethod
    def from_box(cls, lo, hi) -> "Domain":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))

        def contains(p: np.ndarray) -> bool:
            p = np.atleast_1d(np.asarray(p, dtype=float))
            return bool(np.all(p >= lo) and np.all(p <= hi))

        return cls(contains=contains, box=(lo, hi))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.box is None:
            raise ValueError("domain has no bounding box to sample from")
        lo, hi = self.box
        return lo + (hi - lo) * rng.random((count, lo.size))


class Hypothesis(str, Enum):
    """Which sufficient condition justifies chart injectivity near a stratum."""

    BOUNDED_G = "bounded_g"
    D1_BOUNDED = "d1_bounded"
    STRATUM = "stratum"  # the whole admissible set sits in one stratum
    NONE = "none"


@dataclass(eq=False)
class Model:
    grid: Grid
    n: int
    lmap: LinearMapL
    delays: tuple[DelayFn, ...]
    g: RhsG
    w_domain: Domain
    v_domain: Domain
    witness: SegmentC1
    hypothesis: Hypothesis = Hypothesis.NONE
    hypothesis_stratum: DelaySet | None = None
    zero_tol: float = ZERO_TOL_DEFAULT
    model_id: str = "custom"

    def __post_init__(self):
        self.delays = tuple(self.delays)
        if not self.delays:
            raise ModelValidationError("at least one delay is required")
        if self.lmap.n != self.n:
            raise ModelValidationError("L and the state dimension disagree")
        if self.hypothesis is Hypothesis.STRATUM and self.hypothesis_stratum is None:
            raise ModelValidationError("stratum hypothesis requires the stratum")
        self._self_check()

    # -- registration self-checks -------------------------------------------

    def _self_check(self, samples: int = 5, rel_tol: float = 1e-5):
        """Cross-check supplied gradients against finite differences.

        A silent gradient bug would corrupt every chart, so registration
        refuses models whose closed-form derivatives disagree with central
        differences on sampled box points.
        """
        rng = np.random.default_rng(0)
        r = self.grid.r
        if self.w_domain.box is not None:
            for w in self.w_domain.sample(rng, samples):
                for i, d in enumerate(self.delays):
                    val = float(d.fn(w))
                    if val < -1e-12 or val > r + 1e-12:
                        raise ModelValidationError(
                            f"delay {i} leaves [0, r] at {w}: {val}"
                        )
                    _check_gradient(d.fn, d.grad, w, rel_tol, f"delay {i}")
        if self.v_domain.box is not None:
            for v in self.v_domain.sample(rng, samples):
                _check_jacobian(self.g.fn, self.g.jac, v, self.n, rel_tol)
                if self.g.bound is not None:
                    gv = np.atleast_1d(self.g.fn(v))
                    if np.max(np.abs(gv)) > self.g.bound + 1e-12:
                        raise ModelValidationError(
                            f"|g| exceeds its declared bound at {v}"
                        )
        if self.membership(self.witness) is None:
            raise ModelValidationError("witness segment is not admissible")

    # -- basic structure ------------------------------------------------------

    @property
    def r(self) -> float:
        return self.grid.r

    @property
    def num_delays(self) -> int:
        return len(self.delays)

    @property
    def dim_f(self) -> int:
        return self.lmap.dim_f

    def delay_values(self, w: np.ndarray) -> np.ndarray:
        return np.array([float(d.fn(w)) for d in self.delays])

    def classify_point(self, w: np.ndarray) -> DelaySet:
        """The subset of delays vanishing at w (within ``zero_tol``)."""
        if not self.w_domain.contains(w):
            raise OutsideDomainError("W")
        ds = self.delay_values(w)
        return DelaySet.from_indices(np.nonzero(ds <= self.zero_tol)[0], self.num_delays)

    # -- evaluation ------------------------------------------------------------

    def _require_w(self, w: np.ndarray) -> np.ndarray:
        if not self.w_domain.contains(w):
            raise OutsideDomainError("W")
        return w

    def _hat_from(self, w: np.ndarray, value_at: Callable[[float], np.ndarray]) -> np.ndarray:
        out = np.empty((self.num_delays, self.n))
        for i, d in enumerate(self.delays):
            out[i] = np.atleast_1d(value_at(-float(d.fn(w))))
        return out

    def hat(self, phi: SegmentC1) -> np.ndarray:
        """The vector (phi(-d_1(L phi)), ..., phi(-d_k(L phi))) as a (k, n) array."""
        w = self._require_w(self.lmap.apply(phi))
        return self._hat_from(w, phi.eval)

    def _require_v(self, hatv: np.ndarray) -> np.ndarray:
        if not self.v_domain.contains(hatv.ravel()):
            raise OutsideDomainError("V")
        return hatv

    def rhs_f(self, phi: SegmentC1) -> np.ndarray:
        hatv = self._require_v(self.hat(phi))
        return np.atleast_1d(self.g.fn(hatv.ravel()))

    def rhs_f_from_values(self, value_at: Callable[[float], np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate f on a history given as a callable; returns (f, L-value).

        This is the integrator's entry point: it avoids resampling the dense
        solution history onto the grid at every stage.
        """
        w = self._require_w(self.lmap.apply_values_fn(value_at))
        hatv = self._require_v(self._hat_from(w, value_at))
        return np.atleast_1d(self.g.fn(hatv.ravel())), w

    def df(self, phi: SegmentC1, chi: SegmentC1 | SegmentC0) -> np.ndarray:
        """Directional derivative of f at phi applied to chi.

        Accepts C0 perturbations as well; only values of chi enter.
        """
        w = self._require_w(self.lmap.apply(phi))
        hatv = self._require_v(self._hat_from(w, phi.eval))
        big_jac = np.asarray(self.g.jac(hatv.ravel()), dtype=float)
        l_chi = self.lmap.apply(chi)
        v = np.empty((self.num_delays, self.n))
        for i, d in enumerate(self.delays):
            tau = -float(d.fn(w))
            shift = float(np.dot(np.atleast_1d(d.grad(w)), l_chi))
            v[i] = chi.eval(tau) - phi.eval_deriv(tau) * shift
        return big_jac @ v.ravel()

    # The extension to merely-continuous perturbations is the same formula.
    df_ext = df

    # -- membership and residuals ----------------------------------------------

    def membership(self, phi: SegmentC1) -> DelaySet | None:
        """The stratum of phi, or None when phi is inadmissible."""
        try:
            w = self.lmap.apply(phi)
            if not self.w_domain.contains(w):
                return None
            hatv = self._hat_from(w, phi.eval)
            if not self.v_domain.contains(hatv.ravel()):
                return None
            return self.classify_point(w)
        except OutsideDomainError:
            return None

    def on_manifold_residual(self, phi: SegmentC1) -> float:
        """Max-norm defect of the compatibility condition phi'(0) = f(phi)."""
        if self.membership(phi) is None:
            raise OutsideDomainError("U")
        return float(np.max(np.abs(phi.deriv_at_zero - self.rhs_f(phi))))

    def tangent_residual(self, phi: SegmentC1, chi: SegmentC1) -> float:
        """Max-norm defect of the linearized condition chi'(0) = Df(phi) chi."""
        if self.membership(phi) is None:
            raise OutsideDomainError("U")
        return float(np.max(np.abs(chi.deriv_at_zero - self.df(phi, chi))))


def _check_gradient(fn, grad, w, rel_tol: float, label: str):
    w = np.atleast_1d(np.asarray(w, dtype=float))
    g = np.atleast_1d(np.asarray(grad(w), dtype=float))
    if g.shape != w.shape:
        raise ModelValidationError(f"{label}: gradient shape {g.shape} != {w.shape}")
    eps = 1e-6
    fd = np.empty_like(g)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = eps
        fd[j] = (float(fn(w + e)) - float(fn(w - e))) / (2 * eps)
    scale = max(1.0, float(np.max(np.abs(g))), float(np.max(np.abs(fd))))
    if np.max(np.abs(g - fd)) > rel_tol * scale:
        raise ModelValidationError(f"{label}: gradient disagrees with finite differences")


def _check_jacobian(fn, jac, v, n: int, rel_tol: float):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    big_jac = np.asarray(jac(v), dtype=float)
    if big_jac.shape != (n, v.size):
        raise ModelValidationError(f"g jacobian shape {big_jac.shape} != ({n}, {v.size})")
    eps = 1e-6
    fd = np.empty_like(big_jac)
    for j in range(v.size):
        e = np.zeros_like(v)
        e[j] = eps
        fd[:, j] = (np.atleast_1d(fn(v + e)) - np.atleast_1d(fn(v - e))) / (2 * eps)
    scale = max(1.0, float(np.max(np.abs(big_jac))), float(np.max(np.abs(fd))))
    if np.max(np.abs(big_jac - fd)) > rel_tol * scale:
        raise ModelValidationError("g jacobian disagrees with finite differences")
