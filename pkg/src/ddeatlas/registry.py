"""Built-in example systems.

Four systems exercise every stratum shape and every chart kind the package
supports:

``ode``        single delay identically zero; the system is an ordinary
               differential equation x' = -x and the full-delay-set chart
               applies globally.
``eq1``        x'(t) = g(x(t), x(t - rho(x(t)))) with rho > 0 everywhere:
               the first delay vanishes identically, the second never does,
               so the admissible set is one stratum and a single frame chart
               covers the manifold.
``mvw``        x'(t) = g(x(t - 1 - delta(x(t) + x(t-2)))) with bounded g:
               one strictly positive state-dependent delay, empty vanishing
               set.
``twodelay``   two coupled components with two strictly positive
               state-dependent delays; again one stratum (the empty set).

Model definition files name one of these ids plus keyword parameters; the
loader rejects anything else, so configuration files cannot inject code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .model import DelayFn, DelaySet, Domain, Hypothesis, LinearMapL, Model, RhsG
from .sampling import random_flat_segment, random_smooth_segment
from .segments import Grid, SegmentC1


def _sech2(x: float) -> float:
    c = np.cosh(x)
    return 1.0 / (c * c)


@dataclass(eq=False)
class BuiltinModel:
    model_id: str
    summary: str
    build: Callable[..., Model]
    expected_strata: tuple[str, ...]  # stratum tokens
    coverage_boxes: Callable[[Model], dict[str, tuple[np.ndarray, np.ndarray]]]
    default_seeds: Callable[[Model, np.random.Generator], list[SegmentC1]]
    flat_manifold_point: Callable[[Model, np.random.Generator], SegmentC1]


# ---------------------------------------------------------------------------
# ode: all delays vanish identically; x' = -x.

def _build_ode(grid: Grid | None = None) -> Model:
    grid = grid or Grid.uniform(1.0, 65)
    n = 1
    lmap = LinearMapL(dim_f=1, n=n, point_terms=((np.array([[1.0]]), 0.0),))
    delays = (DelayFn(fn=lambda w: 0.0, grad=lambda w: np.zeros(1)),)
    g = RhsG(fn=lambda v: -v, jac=lambda v: np.array([[-1.0]]))
    return Model(
        grid=grid,
        n=n,
        lmap=lmap,
        delays=delays,
        g=g,
        w_domain=Domain.from_box([-4.0], [4.0]),
        v_domain=Domain.from_box([-4.0], [4.0]),
        witness=SegmentC1.constant(grid, 1.0),
        hypothesis=Hypothesis.STRATUM,
        hypothesis_stratum=DelaySet.full(1),
        model_id="ode",
    )


def _ode_seeds(model: Model, rng: np.random.Generator) -> list[SegmentC1]:
    return [
        SegmentC1.constant(model.grid, 1.0),
        SegmentC1.constant(model.grid, -0.5),
        random_smooth_segment(model.grid, model.n, rng, scale=0.3),
    ]


def _ode_flat(model: Model, rng: np.random.Generator) -> SegmentC1:
    # f(chi) = -chi(0), so chi in X_0 with chi(0) = 0 is on the manifold.
    seg = random_flat_segment(model.grid, model.n, rng, scale=0.4)
    values = seg.values.copy()
    values[-1] = 0.0
    return SegmentC1(model.grid, values, seg.derivs)


# ---------------------------------------------------------------------------
# eq1: L phi = phi(0), d_0 = 0, d_1 = rho with rho > 0 everywhere.

def _build_eq1(
    grid: Grid | None = None,
    rho_amplitude: float = 0.25,
    hypothesis: str = "stratum",
) -> Model:
    grid = grid or Grid.uniform(2.0, 65)
    n = 1
    amp = float(rho_amplitude)
    if not 0.0 <= amp < 1.0:
        raise ValueError("rho_amplitude must keep rho inside (0, r]")
    lmap = LinearMapL(dim_f=1, n=n, point_terms=((np.array([[1.0]]), 0.0),))
    delays = (
        DelayFn(fn=lambda w: 0.0, grad=lambda w: np.zeros(1)),
        DelayFn(
            fn=lambda w: 1.0 + amp * np.sin(w[0]),
            grad=lambda w: np.array([amp * np.cos(w[0])]),
        ),
    )

    def g_fn(v):
        return np.array([0.2 * np.sin(v[0]) - 0.5 * np.tanh(v[1])])

    def g_jac(v):
        return np.array([[0.2 * np.cos(v[0]), -0.5 * _sech2(v[1])]])

    hyp = Hypothesis(hypothesis)
    if hyp not in (Hypothesis.STRATUM, Hypothesis.D1_BOUNDED):
        raise ValueError("eq1 supports the 'stratum' and 'd1_bounded' hypotheses")
    return Model(
        grid=grid,
        n=n,
        lmap=lmap,
        delays=delays,
        g=RhsG(fn=g_fn, jac=g_jac, bound=0.7),
        w_domain=Domain.from_box([-3.0], [3.0]),
        v_domain=Domain.from_box([-3.0, -3.0], [3.0, 3.0]),
        witness=SegmentC1.constant(grid, 0.25),
        hypothesis=hyp,
        hypothesis_stratum=DelaySet.from_indices([0], 2) if hyp is Hypothesis.STRATUM else None,
        model_id="eq1",
    )


def _eq1_seeds(model: Model, rng: np.random.Generator) -> list[SegmentC1]:
    return [
        SegmentC1.constant(model.grid, 0.3),
        SegmentC1.constant(model.grid, -0.4),
        random_smooth_segment(model.grid, model.n, rng, scale=0.3),
    ]


def _eq1_coverage(model: Model) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    return {"0": (np.array([-1.2]), np.array([1.2]))}


def _eq1_flat(model: Model, rng: np.random.Generator) -> SegmentC1:
    # With chi(0) = 0 the delayed argument is rho(0) = 1 (a grid node); making
    # chi vanish there too gives g(0, 0) = 0 = chi'(0).
    seg = random_flat_segment(model.grid, model.n, rng, scale=0.4)
    values = seg.values.copy()
    derivs = seg.derivs.copy()
    values[-1] = 0.0
    values[model.grid.index_of_time(-1.0)] = 0.0
    return SegmentC1(model.grid, values, derivs)


# ---------------------------------------------------------------------------
# mvw: L phi = phi(0) + phi(-2), one delay 1 + delta(w), bounded g.

def _build_mvw(grid: Grid | None = None, delta_amplitude: float = 0.5) -> Model:
    grid = grid or Grid.uniform(2.0, 65)
    n = 1
    amp = float(delta_amplitude)
    if not 0.0 <= amp < 1.0:
        raise ValueError("delta_amplitude must keep the delay inside (0, r]")
    lmap = LinearMapL(
        dim_f=1,
        n=n,
        point_terms=((np.array([[1.0]]), 0.0), (np.array([[1.0]]), -2.0)),
    )
    delays = (
        DelayFn(
            fn=lambda w: 1.0 + amp * np.sin(w[0]),
            grad=lambda w: np.array([amp * np.cos(w[0])]),
        ),
    )
    g = RhsG(
        fn=lambda v: np.array([-np.tanh(v[0])]),
        jac=lambda v: np.array([[-_sech2(v[0])]]),
        bound=1.0,
    )
    return Model(
        grid=grid,
        n=n,
        lmap=lmap,
        delays=delays,
        g=g,
        w_domain=Domain.from_box([-3.0], [3.0]),
        v_domain=Domain.from_box([-3.0], [3.0]),
        witness=SegmentC1.constant(grid, 0.5),
        hypothesis=Hypothesis.BOUNDED_G,
        model_id="mvw",
    )


def _mvw_seeds(model: Model, rng: np.random.Generator) -> list[SegmentC1]:
    return [
        SegmentC1.constant(model.grid, 0.5),
        SegmentC1.constant(model.grid, -0.3),
        random_smooth_segment(model.grid, model.n, rng, scale=0.3),
    ]


def _mvw_coverage(model: Model) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    return {"none": (np.array([-2.0]), np.array([2.0]))}


def _mvw_flat(model: Model, rng: np.random.Generator) -> SegmentC1:
    # Zeroing chi at 0 and -2 pins L chi = 0, hence the delay is exactly 1;
    # zeroing chi(-1) then gives g = 0.
    grid = model.grid
    seg = random_flat_segment(grid, model.n, rng, scale=0.4)
    values = seg.values.copy()
    values[-1] = 0.0
    values[grid.index_of_time(-2.0)] = 0.0
    values[grid.index_of_time(-1.0)] = 0.0
    return SegmentC1(grid, values, seg.derivs)


# ---------------------------------------------------------------------------
# twodelay: two components, two strictly positive delays.

def _build_twodelay(grid: Grid | None = None) -> Model:
    grid = grid or Grid.uniform(1.6, 65)
    n = 2
    lmap = LinearMapL(dim_f=2, n=n, point_terms=((np.eye(2), 0.0),))
    delays = (
        DelayFn(
            fn=lambda w: 0.5 + 0.25 * np.tanh(w[0]),
            grad=lambda w: np.array([0.25 * _sech2(w[0]), 0.0]),
        ),
        DelayFn(
            fn=lambda w: 0.9 + 0.3 * np.tanh(w[1]),
            grad=lambda w: np.array([0.0, 0.3 * _sech2(w[1])]),
        ),
    )

    def g_fn(v):
        # v = (v11, v12, v21, v22): first pair is the state at -d_0.
        return np.array(
            [
                0.2 * np.sin(v[3]) - 0.3 * np.tanh(v[0]),
                0.1 * np.sin(v[2]) - 0.35 * np.tanh(v[1]),
            ]
        )

    def g_jac(v):
        return np.array(
            [
                [-0.3 * _sech2(v[0]), 0.0, 0.0, 0.2 * np.cos(v[3])],
                [0.0, -0.35 * _sech2(v[1]), 0.1 * np.cos(v[2]), 0.0],
            ]
        )

    return Model(
        grid=grid,
        n=n,
        lmap=lmap,
        delays=delays,
        g=RhsG(fn=g_fn, jac=g_jac, bound=0.7),
        w_domain=Domain.from_box([-2.0, -2.0], [2.0, 2.0]),
        v_domain=Domain.from_box([-2.0] * 4, [2.0] * 4),
        witness=SegmentC1.constant(grid, np.array([0.3, -0.2])),
        hypothesis=Hypothesis.STRATUM,
        hypothesis_stratum=DelaySet.empty(2),
        model_id="twodelay",
    )


def _twodelay_seeds(model: Model, rng: np.random.Generator) -> list[SegmentC1]:
    return [
        SegmentC1.constant(model.grid, np.array([0.3, -0.2])),
        SegmentC1.constant(model.grid, np.array([-0.25, 0.35])),
        random_smooth_segment(model.grid, model.n, rng, scale=0.25),
    ]


def _twodelay_coverage(model: Model) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    return {"none": (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))}


def _twodelay_flat(model: Model, rng: np.random.Generator) -> SegmentC1:
    # L chi = chi(0) = 0 pins the delays at (0.5, 0.9), both grid nodes.
    grid = model.grid
    seg = random_flat_segment(grid, model.n, rng, scale=0.3)
    values = seg.values.copy()
    values[-1] = 0.0
    values[grid.index_of_time(-0.5)] = 0.0
    values[grid.index_of_time(-0.9)] = 0.0
    return SegmentC1(grid, values, seg.derivs)


# ---------------------------------------------------------------------------

_BUILTINS: dict[str, BuiltinModel] = {
    "ode": BuiltinModel(
        model_id="ode",
        summary="x' = -x written with a single identically-zero delay",
        build=_build_ode,
        expected_strata=("0",),
        coverage_boxes=lambda model: {},
        default_seeds=_ode_seeds,
        flat_manifold_point=_ode_flat,
    ),
    "eq1": BuiltinModel(
        model_id="eq1",
        summary="x'(t) = g(x(t), x(t - rho(x(t)))) with rho > 0 everywhere",
        build=_build_eq1,
        expected_strata=("0",),
        coverage_boxes=_eq1_coverage,
        default_seeds=_eq1_seeds,
        flat_manifold_point=_eq1_flat,
    ),
    "mvw": BuiltinModel(
        model_id="mvw",
        summary="x'(t) = g(x(t - 1 - delta(x(t) + x(t-2)))) with bounded g",
        build=_build_mvw,
        expected_strata=("none",),
        coverage_boxes=_mvw_coverage,
        default_seeds=_mvw_seeds,
        flat_manifold_point=_mvw_flat,
    ),
    "twodelay": BuiltinModel(
        model_id="twodelay",
        summary="two components with two strictly positive state-dependent delays",
        build=_build_twodelay,
        expected_strata=("none",),
        coverage_boxes=_twodelay_coverage,
        default_seeds=_twodelay_seeds,
        flat_manifold_point=_twodelay_flat,
    ),
}

BUILTIN_IDS = tuple(_BUILTINS)


def builtin(model_id: str) -> BuiltinModel:
    try:
        return _BUILTINS[model_id]
    except KeyError:
        raise KeyError(f"unknown model id {model_id!r}; choose from {BUILTIN_IDS}") from None


def get_model(model_id: str, grid: Grid | None = None, **params) -> Model:
    return builtin(model_id).build(grid=grid, **params)


def load_model_spec(doc: dict | str | Path) -> Model:
    """Build a model from a JSON/TOML definition document.

    The document names a built-in (``model``) with optional ``params`` and an
    optional ``grid`` override ``{"r": ..., "M": ...}``.  Arbitrary code is
    rejected by construction: only registered ids and their keyword
    parameters are accepted.
    """
    if isinstance(doc, (str, Path)):
        path = Path(doc)
        text = path.read_text()
        if path.suffix.lower() == ".toml":
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            doc = tomllib.loads(text)
        else:
            doc = json.loads(text)
    if not isinstance(doc, dict) or "model" not in doc:
        raise ValueError("model definition must be a table with a 'model' id")
    entry = builtin(str(doc["model"]))
    params = dict(doc.get("params", {}))
    grid = None
    if "grid" in doc:
        gspec = doc["grid"]
        grid = Grid.uniform(float(gspec["r"]), int(gspec.get("M", 65)))
    extra = set(doc) - {"model", "params", "grid"}
    if extra:
        raise ValueError(f"unsupported keys in model definition: {sorted(extra)}")
    return entry.build(grid=grid, **params)
