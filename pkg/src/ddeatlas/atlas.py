"""Stratum bookkeeping, the manifold lift, and atlas assembly.

Strata are discovered from user-supplied seed segments rather than enumerated
over all 2^k subsets: whether a stratum is populated is undecidable from the
domain predicates alone, and the seeds are exactly the constructive witnesses
the admissibility assumption provides.  Each discovered stratum gets one
chart: the projection chart when every delay vanishes there, a frame chart
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bumps import make_vector_bump
from .chart_j import ChartJ, build_frame_j
from .chart_k import ChartK, build_frame_k
from .errors import NoChartForStratumError, OutsideDomainError
from .model import DelaySet, Model
from .segments import SegmentC1
from .solvers import SolverSettings

LIFT_TOL = 1e-10
NEAR_BOUNDARY_FACTOR = 10.0


def classify(model: Model, w: np.ndarray) -> DelaySet:
    """The stratum of a point of R^{dim_f}: which delays vanish there."""
    return model.classify_point(np.atleast_1d(np.asarray(w, dtype=float)))


def lift_to_manifold(model: Model, phi: SegmentC1) -> SegmentC1:
    """Move an admissible segment onto the solution set without leaving its stratum.

    Adds q_j eta_j per component with q = f(phi) - phi'(0), where each eta_j
    is a bump vanishing at 0, at every delayed evaluation time of phi, and
    under L.  The correction therefore changes phi'(0) to f(phi) while leaving
    L phi and every delayed value untouched, so f itself is unchanged.
    """
    mem = model.membership(phi)
    if mem is None:
        raise OutsideDomainError("U")
    q = model.rhs_f(phi) - phi.deriv_at_zero
    if float(np.max(np.abs(q))) == 0.0:
        return phi
    w = model.lmap.apply(phi)
    if mem.is_full:
        z = -model.r / 2.0
    else:
        z = -min(float(model.delays[k].fn(w)) for k in mem.complement_indices)
    out = phi
    for j in range(model.n):
        if q[j] != 0.0:
            out = out + q[j] * make_vector_bump(model, j, z)
    return out


@dataclass(eq=False)
class Atlas:
    model: Model
    charts: dict[DelaySet, ChartK | ChartJ]
    witnesses: dict[DelaySet, list[SegmentC1]]
    coverage_boxes: dict[DelaySet, tuple[np.ndarray, np.ndarray]]
    near_boundary_flags: list[dict] = field(default_factory=list)

    @property
    def strata(self) -> tuple[DelaySet, ...]:
        return tuple(sorted(self.charts, key=lambda s: s.mask))

    def chart_for(self, phi: SegmentC1) -> tuple[ChartK | ChartJ, SegmentC1]:
        """The chart of phi's stratum and the chart image of phi."""
        mem = self.model.membership(phi)
        if mem is None:
            raise OutsideDomainError("U")
        chart = self.charts.get(mem)
        if chart is None:
            raise NoChartForStratumError(f"no chart built for stratum {mem}")
        try:
            return chart, chart.project(phi)
        except OutsideDomainError:
            raise NoChartForStratumError(
                f"stratum {mem} has a chart but phi leaves its coverage box"
            ) from None

    def manifest(self) -> dict:
        strata = []
        for stratum in self.strata:
            chart = self.charts[stratum]
            per_witness = []
            for wit in self.witnesses[stratum]:
                image = chart.project(wit)
                back, info = chart.invert_with_info(image)
                per_witness.append(
                    {
                        "on_manifold_residual": self.model.on_manifold_residual(wit),
                        "round_trip_residual": float(
                            np.max(np.abs(back.values - wit.values))
                            + np.max(np.abs(back.derivs - wit.derivs))
                        ),
                        "solver_iterations": info.iterations,
                        "segment": wit.to_json_dict(),
                    }
                )
            entry = {
                "stratum": stratum.token,
                "chart": "projection" if stratum.is_full else "frame",
                "frame": chart.frame.report(),
                "witnesses": per_witness,
            }
            box = self.coverage_boxes.get(stratum)
            if box is not None:
                entry["coverage_box"] = {"lo": box[0].tolist(), "hi": box[1].tolist()}
            strata.append(entry)
        return {
            "model": self.model.model_id,
            "stratum_count": len(self.charts),
            "strata": strata,
            "near_boundary_flags": self.near_boundary_flags,
        }


def _default_box(model: Model, ws: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.array(ws)
    lo, hi = arr.min(axis=0), arr.max(axis=0)
    pad = 0.25 * (hi - lo) + 0.1
    return lo - pad, hi + pad


def build_atlas(
    model: Model,
    seeds: list[SegmentC1],
    coverage_boxes: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
    settings: SolverSettings | None = None,
) -> Atlas:
    """Classify and lift the seeds, then build one chart per discovered stratum.

    ``coverage_boxes`` maps stratum tokens to boxes in R^{dim_f}; strata
    without an entry get a padded bounding box of their witnesses' L-values.
    """
    settings = settings or SolverSettings()
    witnesses: dict[DelaySet, list[SegmentC1]] = {}
    seed_ws: dict[DelaySet, list[np.ndarray]] = {}
    flags: list[dict] = []
    for idx, seed in enumerate(seeds):
        mem = model.membership(seed)
        if mem is None:
            raise OutsideDomainError("U", f"seed {idx} is not admissible")
        w = model.lmap.apply(seed)
        for k in mem.complement_indices:
            dk = float(model.delays[k].fn(w))
            if dk <= NEAR_BOUNDARY_FACTOR * model.zero_tol:
                flags.append({"seed": idx, "delay": k, "value": dk, "stratum": mem.token})
        lifted = lift_to_manifold(model, seed)
        residual = model.on_manifold_residual(lifted)
        if residual > LIFT_TOL:
            raise OutsideDomainError("U", f"seed {idx} lift residual {residual:.2e}")
        witnesses.setdefault(mem, []).append(lifted)
        seed_ws.setdefault(mem, []).append(w)

    charts: dict[DelaySet, ChartK | ChartJ] = {}
    boxes: dict[DelaySet, tuple[np.ndarray, np.ndarray]] = {}
    for stratum, wits in witnesses.items():
        if stratum.is_full:
            charts[stratum] = ChartK(model, build_frame_k(model), settings)
        else:
            box = None
            if coverage_boxes and stratum.token in coverage_boxes:
                raw = coverage_boxes[stratum.token]
                box = (np.atleast_1d(np.asarray(raw[0], float)), np.atleast_1d(np.asarray(raw[1], float)))
            if box is None:
                box = _default_box(model, seed_ws[stratum])
            boxes[stratum] = box
            charts[stratum] = ChartJ(model, build_frame_j(model, stratum, box), settings)
    return Atlas(
        model=model,
        charts=charts,
        witnesses=witnesses,
        coverage_boxes=boxes,
        near_boundary_flags=flags,
    )
