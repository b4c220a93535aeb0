"""Method-of-steps integration of x'(t) = f(x_t) with dense history.

Classical RK4 advances the solution step by step.  Delayed arguments are
served from the dense history; an argument falling inside the current step is
resolved by fixed-point iteration on the step polynomial, so delays smaller
than the step (including delays approaching zero) integrate without step
rejection.  An argument landing exactly at the current stage time is the
stage state itself, which makes the scheme reduce to textbook RK4 when all
delays vanish.

Dense output is one quintic per step, interpolating value and slope at both
endpoints and at the midpoint (midpoint slope is an extra f evaluation).
Endpoint data are shared between neighbouring steps, so the history is C1 at
the joints by construction; the quintic keeps the defect

    |x_t'(0) - f(x_t)|

of the continuous extension at the same fourth order as the knot error, which
is what the step-halving diagnostics measure.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NoConvergenceError, OutsideDomainError
from .model import DelaySet, Model
from .segments import SegmentC1

ON_MANIFOLD_START_TOL = 1e-8
OVERLAP_MAX_ITER = 25
OVERLAP_TOL = 1e-12
_STAGE_TIME_TOL = 1e-13

# Monomial coefficients of the step quintic from (value, slope) data at
# s = 0, 1/2, 1 (slopes scaled by the step size).
_QUINTIC_CONDITIONS = np.array(
    [
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [1, 0.5, 0.25, 0.125, 0.0625, 0.03125],
        [0, 1, 1, 0.75, 0.5, 0.3125],
        [1, 1, 1, 1, 1, 1],
        [0, 1, 2, 3, 4, 5],
    ]
)
_QUINTIC_SOLVE = np.linalg.inv(_QUINTIC_CONDITIONS)


def _cubic_coeffs(h: float, y0, m0, y1, m1) -> np.ndarray:
    """Monomial coefficients in s = (t - t0)/h of the Hermite cubic."""
    y0, m0, y1, m1 = (np.atleast_1d(np.asarray(v, float)) for v in (y0, m0, y1, m1))
    c0 = y0
    c1 = h * m0
    c2 = 3.0 * (y1 - y0) - h * (2.0 * m0 + m1)
    c3 = 2.0 * (y0 - y1) + h * (m0 + m1)
    return np.stack([c0, c1, c2, c3])


def _poly_eval(coeffs: np.ndarray, s: float) -> np.ndarray:
    out = np.zeros(coeffs.shape[1])
    for c in coeffs[::-1]:
        out = out * s + c
    return out


def _poly_deriv(coeffs: np.ndarray, s: float, h: float) -> np.ndarray:
    out = np.zeros(coeffs.shape[1])
    for p in range(coeffs.shape[0] - 1, 0, -1):
        out = out * s + p * coeffs[p]
    return out / h


@dataclass(eq=False)
class StepRecord:
    t0: float
    h: float
    coeffs: np.ndarray  # (6, n) quintic in s = (t - t0)/h

    @property
    def t1(self) -> float:
        return self.t0 + self.h


@dataclass(eq=False)
class StepDiagnostics:
    t1: float
    residual: float         # max defect at interior probe offsets
    stratum: str            # stratum token at the step end
    inner_iterations: int   # within-step fixed-point passes
    used_step_polynomial: bool


@dataclass(eq=False)
class Trajectory:
    model: Model
    initial: SegmentC1
    h: float
    t_final: float
    steps: list[StepRecord]
    diagnostics: list[StepDiagnostics]
    truncated: bool = False
    truncate_reason: str = ""
    _starts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._starts = np.array([s.t0 for s in self.steps])

    # -- dense history ----------------------------------------------------------

    def _step_at(self, t: float) -> StepRecord:
        i = int(np.searchsorted(self._starts, t, side="right")) - 1
        return self.steps[min(max(i, 0), len(self.steps) - 1)]

    def value(self, t: float) -> np.ndarray:
        if t <= 0.0:
            return self.initial.eval(t)
        if t > self.t_final + 1e-12:
            raise DomainError(f"t={t} beyond the integrated horizon {self.t_final}")
        step = self._step_at(min(t, self.t_final))
        s = min(max((t - step.t0) / step.h, 0.0), 1.0)
        return _poly_eval(step.coeffs, s)

    def deriv(self, t: float) -> np.ndarray:
        if t <= 0.0:
            return self.initial.eval_deriv(t)
        if t > self.t_final + 1e-12:
            raise DomainError(f"t={t} beyond the integrated horizon {self.t_final}")
        step = self._step_at(min(t, self.t_final))
        s = min(max((t - step.t0) / step.h, 0.0), 1.0)
        return _poly_deriv(step.coeffs, s, step.h)

    # -- segments and residuals ---------------------------------------------------

    def segment_at(self, t: float) -> SegmentC1:
        """The history segment x_t resampled onto the model grid."""
        if t < 0.0 or t > self.t_final + 1e-12:
            raise DomainError(f"t={t} outside [0, {self.t_final}]")
        nodes = self.model.grid.nodes
        values = np.array([self.value(t + s) for s in nodes])
        derivs = np.array([self.deriv(t + s) for s in nodes])
        return SegmentC1(self.model.grid, values, derivs)

    def residual_at(self, t: float) -> float:
        """Defect |x_t'(0) - f(x_t)| evaluated on the dense history directly."""
        f, _ = self.model.rhs_f_from_values(lambda s: self.value(t + s))
        return float(np.max(np.abs(self.deriv(t) - f)))

    def stratum_at(self, t: float) -> DelaySet:
        _, w = self.model.rhs_f_from_values(lambda s: self.value(t + s))
        return self.model.classify_point(w)

    def max_defect(self, skip_steps: int = 1, offsets=(0.25, 0.75)) -> float:
        """Max interior defect over completed steps (skipping the first by default)."""
        worst = 0.0
        for step in self.steps[skip_steps:]:
            for s in offsets:
                worst = max(worst, self.residual_at(step.t0 + s * step.h))
        return worst

    def knot_times(self) -> np.ndarray:
        return np.append(self._starts, self.t_final)

    def csv_text(self, stride: int = 1) -> str:
        n = self.model.n
        head = ["t"] + [f"x{j + 1}" for j in range(n)] + [f"dx{j + 1}" for j in range(n)]
        head += ["residual", "stratum"]
        buf = io.StringIO()
        buf.write(",".join(head) + "\n")
        knots = self.knot_times()
        picks = list(range(0, knots.size, max(1, stride)))
        if picks[-1] != knots.size - 1:
            picks.append(knots.size - 1)
        for i in picks:
            t = float(knots[i])
            v = self.value(t)
            d = self.deriv(t)
            row = [repr(t)] + [repr(float(x)) for x in v] + [repr(float(x)) for x in d]
            row.append(repr(self.residual_at(t)))
            row.append(self.stratum_at(t).token)
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


class _History:
    """Dense lookup over the initial segment and the completed steps."""

    def __init__(self, initial: SegmentC1):
        self.initial = initial
        self.steps: list[StepRecord] = []

    def value(self, t: float) -> np.ndarray:
        if t <= 0.0:
            return self.initial.eval(t)
        # Steps are appended in order; lookups stay within completed steps.
        for step in reversed(self.steps):
            if t >= step.t0 - 1e-15:
                s = min(max((t - step.t0) / step.h, 0.0), 1.0)
                return _poly_eval(step.coeffs, s)
        return self.initial.eval(0.0)


def integrate(model: Model, phi0: SegmentC1, h: float, t_end: float) -> Trajectory:
    """Advance x'(t) = f(x_t) from the admissible initial segment phi0.

    Requires phi0 to satisfy the compatibility condition (use the manifold
    lift to produce admissible data) and h <= r/4.  If the trajectory leaves
    the admissible set the result is truncated and flagged, not discarded.
    """
    model.grid.require_same(phi0.grid)
    if h <= 0 or t_end < h:
        raise ValueError("need 0 < h <= t_end")
    if h > model.r / 4.0 + 1e-12:
        raise ValueError("step size must satisfy h <= r/4")
    start_res = model.on_manifold_residual(phi0)
    if start_res > ON_MANIFOLD_START_TOL:
        raise ValueError(
            f"initial segment violates compatibility ({start_res:.2e}); lift it first"
        )

    hist = _History(phi0)
    diags: list[StepDiagnostics] = []
    truncated = False
    reason = ""

    def stage_rhs(s_global: float, y_stage: np.ndarray, t0: float, prov, consulted: list):
        def value_at(tau: float) -> np.ndarray:
            u = s_global + tau
            if abs(u - s_global) <= _STAGE_TIME_TOL * max(1.0, abs(s_global)):
                return y_stage
            if u <= t0 + 1e-15:
                return hist.value(u)
            consulted[0] = True
            s = min(max((u - t0) / prov["h"], 0.0), 1.0)
            return _poly_eval(prov["coeffs"], s)

        f, w = model.rhs_f_from_values(value_at)
        return f, w

    t = 0.0
    y = phi0.eval(0.0)
    m = phi0.eval_deriv(0.0)
    steps_out: list[StepRecord] = []

    while t < t_end - 1e-12:
        h_step = min(h, t_end - t)
        if h_step < 1e-12:
            break
        prov = {"h": h_step, "coeffs": _cubic_coeffs(h_step, y, m, y + h_step * m, m)}
        prev = None
        passes = 0
        consulted_any = False
        try:
            while True:
                passes += 1
                if passes > OVERLAP_MAX_ITER:
                    raise NoConvergenceError(
                        "overlap_no_convergence: within-step iteration stalled",
                        iterations=passes,
                    )
                consulted = [False]
                k1, _ = stage_rhs(t, y, t, prov, consulted)
                k2, _ = stage_rhs(t + h_step / 2, y + h_step * k1 / 2, t, prov, consulted)
                k3, _ = stage_rhs(t + h_step / 2, y + h_step * k2 / 2, t, prov, consulted)
                k4, _ = stage_rhs(t + h_step, y + h_step * k3, t, prov, consulted)
                y_next = y + h_step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                m_next, w_end = stage_rhs(t + h_step, y_next, t, prov, consulted)
                consulted_any = consulted_any or consulted[0]
                if not consulted[0]:
                    break
                if prev is not None:
                    gap = max(
                        float(np.max(np.abs(y_next - prev[0]))),
                        float(np.max(np.abs(m_next - prev[1]))),
                    )
                    if gap <= OVERLAP_TOL * max(1.0, float(np.max(np.abs(y_next)))):
                        break
                prev = (y_next, m_next)
                prov["coeffs"] = _cubic_coeffs(h_step, y, m, y_next, m_next)
            # Midpoint data for the quintic dense output.  A genuine RK4 half
            # step keeps the midpoint value fifth-order accurate; reading it
            # off the step cubic would cap the dense defect at third order.
            prov["coeffs"] = _cubic_coeffs(h_step, y, m, y_next, m_next)
            hh = h_step / 2.0
            q2, _ = stage_rhs(t + hh / 2, y + hh * k1 / 2, t, prov, [False])
            q3, _ = stage_rhs(t + hh / 2, y + hh * q2 / 2, t, prov, [False])
            q4, _ = stage_rhs(t + hh, y + hh * q3, t, prov, [False])
            y_mid = y + hh / 6.0 * (k1 + 2 * q2 + 2 * q3 + q4)
            m_mid, _ = stage_rhs(t + hh, y_mid, t, prov, [False])
        except OutsideDomainError as exc:
            truncated = True
            reason = f"outside_U at t={t:.6g} ({exc})"
            break

        data = np.stack(
            [y, h_step * m, y_mid, h_step * m_mid, y_next, h_step * m_next]
        )
        step = StepRecord(t0=t, h=h_step, coeffs=_QUINTIC_SOLVE @ data)
        hist.steps.append(step)
        steps_out.append(step)
        t = step.t1
        y, m = y_next, m_next
        diags.append(
            StepDiagnostics(
                t1=t,
                residual=0.0,  # filled below once the trajectory object exists
                stratum=model.classify_point(w_end).token,
                inner_iterations=passes,
                used_step_polynomial=consulted_any,
            )
        )

    if not steps_out:
        raise NoConvergenceError("integration produced no steps before leaving the domain")
    traj = Trajectory(
        model=model,
        initial=phi0,
        h=h,
        t_final=steps_out[-1].t1,
        steps=steps_out,
        diagnostics=diags,
        truncated=truncated,
        truncate_reason=reason,
    )
    for step, diag in zip(traj.steps, traj.diagnostics):
        diag.residual = max(
            traj.residual_at(step.t0 + 0.25 * step.h),
            traj.residual_at(step.t0 + 0.75 * step.h),
        )
    return traj
