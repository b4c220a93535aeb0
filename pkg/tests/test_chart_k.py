import numpy as np
import pytest

from ddeatlas import (
    ChartK,
    SegmentC1,
    build_frame_k,
    get_model,
    lift_to_manifold,
)
from ddeatlas.sampling import random_flat_segment, random_raw_segment, random_smooth_segment
from conftest import node_gap


@pytest.fixture(scope="module")
def ode_chart():
    model = get_model("ode")
    return ChartK(model, build_frame_k(model))


class TestFrameK:
    def test_identities_random_x(self, ode_chart, rng):
        model = ode_chart.model
        for _ in range(32):
            x = rng.normal(size=model.n)
            seg = ode_chart.frame.apply(x)
            assert np.max(np.abs(seg.eval(0.0))) <= 1e-10
            assert np.max(np.abs(seg.eval_deriv(0.0) - x)) <= 1e-10
            assert np.max(np.abs(model.lmap.apply(seg))) <= 1e-10

    def test_single_component_unit_slope(self, ode_chart):
        seg = ode_chart.frame.apply(np.array([1.0]))
        assert seg.eval_deriv(0.0)[0] == pytest.approx(1.0, abs=1e-12)

    def test_default_z_is_half_horizon(self, ode_chart):
        assert ode_chart.frame.z == -ode_chart.model.r / 2


class TestProjection:
    def test_fixes_flat_segments(self, ode_chart, rng):
        chi = random_flat_segment(ode_chart.model.grid, 1, rng)
        assert node_gap(ode_chart.project(chi), chi) == 0.0

    def test_kills_frame_directions(self, ode_chart, rng):
        x = rng.normal(size=1)
        out = ode_chart.project(ode_chart.frame.apply(x))
        assert out.norm_c1() <= 1e-12

    def test_lands_flat_exactly(self, ode_chart, rng):
        phi = random_raw_segment(ode_chart.model.grid, 1, rng)
        assert np.max(np.abs(ode_chart.project(phi).deriv_at_zero)) == 0.0

    def test_idempotent(self, ode_chart, rng):
        phi = random_raw_segment(ode_chart.model.grid, 1, rng)
        once = ode_chart.project(phi)
        assert node_gap(ode_chart.project(once), once) == 0.0


class TestInvert:
    def test_fixed_point_of_flat_manifold_point(self, ode_chart, rng):
        # chi flat with f(chi) = 0: chi(0) = 0 for the ode model
        grid = ode_chart.model.grid
        seg = random_flat_segment(grid, 1, rng)
        values = seg.values.copy()
        values[-1] = 0.0
        chi = SegmentC1(grid, values, seg.derivs)
        out, info = ode_chart.invert_with_info(chi)
        assert node_gap(out, chi) <= 1e-12
        assert info.iterations <= 2

    def test_one_step_when_delays_frozen(self, ode_chart, rng):
        # f is constant along the frame here, so one Newton step suffices
        chi = ode_chart.project(lift_to_manifold(ode_chart.model, random_smooth_segment(ode_chart.model.grid, 1, rng, 0.3)))
        _, info = ode_chart.invert_with_info(chi)
        assert info.iterations <= 2

    def test_round_trip_from_lifted(self, ode_chart, rng):
        model = ode_chart.model
        for _ in range(10):
            phi = lift_to_manifold(model, random_smooth_segment(model.grid, 1, rng, 0.3))
            back, info = ode_chart.invert_with_info(ode_chart.project(phi))
            assert node_gap(back, phi) <= 1e-9
            assert info.iterations <= 20

    def test_project_after_invert(self, ode_chart, rng):
        model = ode_chart.model
        chi = ode_chart.project(lift_to_manifold(model, random_smooth_segment(model.grid, 1, rng, 0.3)))
        seg = ode_chart.invert(chi)
        assert node_gap(ode_chart.project(seg), chi) <= 1e-12

    def test_rejects_sloped_input(self, ode_chart, rng):
        seg = random_raw_segment(ode_chart.model.grid, 1, rng)
        if abs(seg.deriv_at_zero[0]) > 1e-6:
            with pytest.raises(ValueError):
                ode_chart.invert(seg)


class TestTangentLift:
    def test_zero_eta(self, ode_chart, rng):
        model = ode_chart.model
        phi = lift_to_manifold(model, random_smooth_segment(model.grid, 1, rng, 0.3))
        out = ode_chart.tangent_lift(phi, SegmentC1.zeros(model.grid, 1))
        assert out.norm_c1() <= 1e-12

    def test_residual_small_and_projects_back(self, ode_chart, rng):
        model = ode_chart.model
        for _ in range(10):
            phi = lift_to_manifold(model, random_smooth_segment(model.grid, 1, rng, 0.3))
            eta = random_flat_segment(model.grid, 1, rng)
            chi = ode_chart.tangent_lift(phi, eta)
            assert model.tangent_residual(phi, chi) <= 1e-9
            assert node_gap(ode_chart.project(chi), eta) <= 1e-9


class TestAlmostGraph:
    def test_fixes_flat_manifold_points(self, ode_chart, rng):
        grid = ode_chart.model.grid
        seg = random_flat_segment(grid, 1, rng)
        values = seg.values.copy()
        values[-1] = 0.0
        chi = SegmentC1(grid, values, seg.derivs)
        assert node_gap(ode_chart.almost_graph(chi), chi) <= 1e-10

    def test_flattens_manifold_points(self, ode_chart, rng):
        model = ode_chart.model
        phi = lift_to_manifold(model, random_smooth_segment(model.grid, 1, rng, 0.3))
        out = ode_chart.almost_graph(phi)
        assert np.max(np.abs(out.deriv_at_zero)) <= 1e-10
        assert node_gap(out, ode_chart.project(phi)) <= 1e-9

    def test_round_trips(self, ode_chart, rng):
        model = ode_chart.model
        for _ in range(10):
            chi = ode_chart.project(lift_to_manifold(model, random_smooth_segment(model.grid, 1, rng, 0.3)))
            sample = chi + ode_chart.frame.apply(0.5 * rng.normal(size=1))
            assert node_gap(ode_chart.almost_graph_inverse(ode_chart.almost_graph(sample)), sample) <= 1e-9
            assert node_gap(ode_chart.almost_graph(ode_chart.almost_graph_inverse(sample)), sample) <= 1e-9


class TestInvarianceAlongFrame:
    def test_f_constant_in_frame_direction(self, ode_chart, rng):
        model = ode_chart.model
        for _ in range(16):
            phi = random_smooth_segment(model.grid, 1, rng, 0.3)
            x = rng.normal(size=1)
            lhs = model.rhs_f(phi + ode_chart.frame.apply(x))
            assert np.max(np.abs(lhs - model.rhs_f(phi))) <= 1e-10
