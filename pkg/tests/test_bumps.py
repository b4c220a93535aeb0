import numpy as np
import pytest

from ddeatlas import (
    BumpRequest,
    Grid,
    SegmentC1,
    get_model,
    make_bump,
    make_component_bump,
    make_vector_bump,
)
from ddeatlas.errors import BumpInfeasibleError


def test_trivial_functional():
    g = Grid.uniform(1.0, 33)
    bump = make_bump(BumpRequest(grid=g, functional=lambda s: np.zeros(0), q=0, z=-0.5))
    seg = bump.segment
    assert abs(seg.eval_deriv(0.0)[0] - 1.0) <= 1e-12
    assert seg.eval(0.0)[0] == 0.0
    for t in np.linspace(-1.0, -0.5, 41):
        assert seg.eval(t)[0] == 0.0
        assert seg.eval_deriv(t)[0] == 0.0
    assert bump.certificate.max_residual <= 1e-10


def test_point_evaluation_functional():
    g = Grid.uniform(1.0, 33)
    z = -0.5
    lam = lambda s: np.array([s.eval(z / 2)[0]])
    bump = make_bump(BumpRequest(grid=g, functional=lam, q=1, z=z))
    assert abs(bump.segment.eval(z / 2)[0]) <= 1e-10
    assert bump.certificate.max_residual <= 1e-10


def test_evaluation_at_zero_auto_satisfied():
    # all candidates vanish at 0, so this constraint costs nothing
    g = Grid.uniform(1.0, 33)
    lam = lambda s: np.array([s.eval(0.0)[0]])
    bump = make_bump(BumpRequest(grid=g, functional=lam, q=1, z=-0.5))
    assert bump.certificate.max_residual <= 1e-10


def test_grid_too_coarse():
    g = Grid.uniform(1.0, 9)
    lam = lambda s: np.array([s.eval(-0.05)[0], s.eval(-0.10)[0], s.eval(-0.15)[0]])
    with pytest.raises(BumpInfeasibleError) as exc:
        make_bump(BumpRequest(grid=g, functional=lam, q=3, z=-0.3))
    assert exc.value.reason == "grid_too_coarse"


def test_determinism():
    g = Grid.uniform(2.0, 65)
    lam = lambda s: np.array([s.eval(-0.7)[0]])
    b1 = make_bump(BumpRequest(grid=g, functional=lam, q=1, z=-1.2))
    b2 = make_bump(BumpRequest(grid=g, functional=lam, q=1, z=-1.2))
    assert np.array_equal(b1.segment.values, b2.segment.values)
    assert np.array_equal(b1.segment.derivs, b2.segment.derivs)


def test_support_snaps_to_grid():
    g = Grid.uniform(1.0, 33)
    z = -0.51  # falls strictly between nodes
    bump = make_bump(BumpRequest(grid=g, functional=lambda s: np.zeros(0), q=0, z=z))
    assert bump.support_start >= z
    assert bump.support_start in g.nodes
    ts = np.linspace(-1.0, bump.support_start, 50)
    assert np.max(np.abs(bump.segment.eval_many(ts))) == 0.0


def test_random_functionals_certificates(rng):
    g = Grid.uniform(2.0, 65)
    for _ in range(32):
        q = int(rng.integers(0, 3))
        times = -2.0 * rng.random(q)
        lam = lambda s, times=times: np.array([s.eval(t)[0] for t in times])
        z = -2.0 * (0.1 + 0.8 * rng.random())
        bump = make_bump(BumpRequest(grid=g, functional=lam, q=q, z=z))
        assert bump.certificate.max_residual <= 1e-10


class TestVectorBump:
    def test_trivial_L_cases(self, models):
        # eq1: L phi = phi(0); every candidate vanishes at 0 already
        model = models["eq1"]
        seg = make_vector_bump(model, 0, -1.0)
        assert abs(model.lmap.apply(seg)[0]) <= 1e-10
        assert np.max(np.abs(seg.eval(0.0))) == 0.0
        assert seg.eval_deriv(0.0)[0] == pytest.approx(1.0, abs=1e-12)

    def test_two_point_L_support_misses_terms(self, models):
        # mvw: L phi = phi(0) + phi(-2); support right of z misses both
        model = models["mvw"]
        seg = make_vector_bump(model, 0, -1.0)
        assert abs(model.lmap.apply(seg)[0]) <= 1e-10
        ts = np.linspace(-2.0, -1.0, 30)
        assert np.max(np.abs(seg.eval_many(ts))) == 0.0

    def test_component_placement(self, models):
        model = models["twodelay"]
        seg = make_vector_bump(model, 1, -0.4)
        assert seg.n == 2
        assert np.max(np.abs(seg.values[:, 0])) == 0.0
        assert seg.eval_deriv(0.0)[1] == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(model.lmap.apply(seg))) <= 1e-10

    def test_scalar_bump_certificate(self, models):
        for model in models.values():
            bump = make_component_bump(model, 0, -model.r / 2)
            assert bump.certificate.max_residual <= 1e-10
