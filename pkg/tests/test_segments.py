import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddeatlas.errors import DomainError, GridMismatchError
from ddeatlas.sampling import random_raw_segment, random_smooth_segment
from ddeatlas.segments import (
    Grid,
    MatSegmentC1,
    SegmentC0,
    SegmentC1,
    scalar_times_basis,
)


def monomial_cubic(t0, t1, y0, m0, y1, m1, t):
    """Independent oracle: Hermite data -> monomial coefficients -> value/slope."""
    A = np.array(
        [
            [1, t0, t0**2, t0**3],
            [0, 1, 2 * t0, 3 * t0**2],
            [1, t1, t1**2, t1**3],
            [0, 1, 2 * t1, 3 * t1**2],
        ]
    )
    c = np.linalg.solve(A, [y0, m0, y1, m1])
    return c[0] + c[1] * t + c[2] * t**2 + c[3] * t**3


class TestGrid:
    def test_uniform_endpoints_exact(self):
        g = Grid.uniform(2.0, 65)
        assert g.nodes[0] == -2.0 and g.nodes[-1] == 0.0 and g.m == 65

    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError):
            Grid(r=1.0, nodes=np.array([-1.0, 0.5, 0.0]))
        with pytest.raises(ValueError):
            Grid(r=1.0, nodes=np.array([-1.0, 0.0]))

    def test_domain_error_outside(self):
        g = Grid.uniform(1.0, 9)
        with pytest.raises(DomainError):
            g.clamp_time(0.5)
        with pytest.raises(DomainError):
            g.clamp_time(-1.5)


class TestEval:
    def test_constant_segment(self):
        g = Grid.uniform(1.0, 17)
        seg = SegmentC1.constant(g, np.array([2.0, -3.0]))
        for t in (-1.0, -0.37, 0.0):
            assert np.allclose(seg.eval(t), [2.0, -3.0], atol=0)
            assert np.allclose(seg.eval_deriv(t), 0.0, atol=0)

    def test_linear_function_reproduced(self):
        g = Grid.uniform(1.0, 9)
        seg = SegmentC1(g, g.nodes[:, None], np.ones((g.m, 1)))
        assert seg.eval(-0.5)[0] == pytest.approx(-0.5, abs=1e-15)
        for t in np.linspace(-1, 0, 23):
            assert seg.eval_deriv(t)[0] == pytest.approx(1.0, abs=1e-14)

    def test_node_data_exact(self, rng):
        g = Grid.uniform(1.5, 13)
        seg = random_raw_segment(g, 2, rng)
        for i, t in enumerate(g.nodes):
            assert np.array_equal(seg.eval(t), seg.values[i])
            assert np.array_equal(seg.eval_deriv(t), seg.derivs[i])

    def test_interior_matches_monomial_oracle_frozen(self):
        # values computed once with the independent oracle above
        g = Grid.uniform(1.0, 5)
        seg = SegmentC1(
            g,
            np.array([0.3, -0.2, 0.5, 0.1, -0.4])[:, None],
            np.array([1.0, -0.5, 0.25, 2.0, -1.5])[:, None],
        )
        assert seg.eval(-0.3)[0] == pytest.approx(0.0796, abs=1e-12)
        assert seg.eval_deriv(-0.3)[0] == pytest.approx(-0.966, abs=1e-12)
        assert seg.eval(-0.8)[0] == pytest.approx(-0.124, abs=1e-12)
        assert seg.eval_deriv(-0.8)[0] == pytest.approx(-2.36, abs=1e-12)

    def test_interior_matches_monomial_oracle_random(self, rng):
        g = Grid.uniform(2.0, 9)
        seg = random_raw_segment(g, 1, rng)
        for t in (-1.9, -1.23, -0.61, -0.05):
            i = g.locate(t)
            expect = monomial_cubic(
                g.nodes[i],
                g.nodes[i + 1],
                seg.values[i, 0],
                seg.derivs[i, 0],
                seg.values[i + 1, 0],
                seg.derivs[i + 1, 0],
                t,
            )
            assert seg.eval(t)[0] == pytest.approx(expect, abs=1e-12)

    def test_deriv_matches_centered_difference(self, rng):
        g = Grid.uniform(1.0, 33)
        seg = random_smooth_segment(g, 2, rng)
        eps = 1e-5
        for t in (-0.9111, -0.52, -0.207):
            fd = (seg.eval(t + eps) - seg.eval(t - eps)) / (2 * eps)
            ex = seg.eval_deriv(t)
            assert np.max(np.abs(fd - ex)) <= 1e-6 * max(1.0, np.max(np.abs(ex)))

    def test_eval_many_matches_eval(self, rng):
        g = Grid.uniform(1.0, 9)
        seg = random_raw_segment(g, 3, rng)
        ts = np.linspace(-1, 0, 41)
        many = seg.eval_many(ts)
        for t, row in zip(ts, many):
            assert np.array_equal(row, seg.eval(t))


class TestNorms:
    def test_zero_segment(self):
        g = Grid.uniform(1.0, 9)
        z = SegmentC1.zeros(g, 2)
        assert z.norm_c0() == 0.0 and z.norm_c1() == 0.0

    def test_identity_function_norms(self):
        g = Grid.uniform(1.0, 17)
        seg = SegmentC1(g, g.nodes[:, None], np.ones((g.m, 1)))
        assert seg.norm_c0() == pytest.approx(1.0, abs=1e-14)
        assert seg.norm_c1() == pytest.approx(2.0, abs=1e-14)

    def test_c1_dominates_c0(self, rng):
        g = Grid.uniform(1.0, 9)
        seg = random_raw_segment(g, 1, rng)
        assert seg.norm_c1() >= seg.norm_c0()


@settings(max_examples=30, deadline=None)
@given(
    data=st.lists(
        st.tuples(
            st.floats(-5, 5, allow_nan=False), st.floats(-5, 5, allow_nan=False)
        ),
        min_size=5,
        max_size=5,
    ),
    a=st.floats(-3, 3, allow_nan=False),
    b=st.floats(-3, 3, allow_nan=False),
)
def test_linearity_property(data, a, b):
    g = Grid.uniform(1.0, 5)
    vals = np.array([d[0] for d in data])[:, None]
    ders = np.array([d[1] for d in data])[:, None]
    f1 = SegmentC1(g, vals, ders)
    f2 = SegmentC1(g, ders, vals)
    ts = np.linspace(-1, 0, 17)
    combo = a * f1 + b * f2
    lhs = combo.eval_many(ts)
    rhs = a * f1.eval_many(ts) + b * f2.eval_many(ts)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


@settings(max_examples=30, deadline=None)
@given(c=st.lists(st.floats(-4, 4, allow_nan=False), min_size=4, max_size=4))
def test_cubic_reproduction_property(c):
    g = Grid.uniform(1.0, 9)
    t = g.nodes
    vals = (c[0] + c[1] * t + c[2] * t**2 + c[3] * t**3)[:, None]
    ders = (c[1] + 2 * c[2] * t + 3 * c[3] * t**2)[:, None]
    seg = SegmentC1(g, vals, ders)
    ts = np.linspace(-1, 0, 37)
    exact = c[0] + c[1] * ts + c[2] * ts**2 + c[3] * ts**3
    scale = max(1.0, float(np.max(np.abs(exact))))
    assert np.max(np.abs(seg.eval_many(ts)[:, 0] - exact)) <= 1e-12 * scale


class TestMatSegment:
    def test_apply_zero(self, rng):
        g = Grid.uniform(1.0, 9)
        mat = MatSegmentC1.from_columns([random_raw_segment(g, 2, rng) for _ in range(2)])
        out = mat.apply(np.zeros(2))
        assert out.norm_c1() == 0.0

    def test_identity_matrix_constant(self):
        g = Grid.uniform(1.0, 9)
        cols = [
            SegmentC1(g, np.tile(np.eye(2)[:, j], (g.m, 1)), np.zeros((g.m, 2)))
            for j in range(2)
        ]
        mat = MatSegmentC1.from_columns(cols)
        q = np.array([0.7, -1.3])
        out = mat.apply(q)
        assert np.allclose(out.eval(-0.4), q, atol=0)
        assert np.allclose(out.eval_deriv(-0.4), 0.0, atol=0)

    def test_basis_vector_selects_column(self, rng):
        g = Grid.uniform(1.0, 9)
        cols = [random_raw_segment(g, 3, rng) for _ in range(3)]
        mat = MatSegmentC1.from_columns(cols)
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1.0
            assert np.array_equal(mat.apply(e).values, cols[j].values)

    def test_apply_commutes_with_eval(self, rng):
        g = Grid.uniform(1.0, 9)
        mat = MatSegmentC1.from_columns([random_raw_segment(g, 2, rng) for _ in range(2)])
        q = rng.normal(size=2)
        for t in (-0.77, -0.3, 0.0):
            assert np.max(np.abs(mat.apply(q).eval(t) - mat.eval_mat(t) @ q)) <= 1e-12


class TestScalarTimesBasis:
    def test_zero(self):
        g = Grid.uniform(1.0, 9)
        out = scalar_times_basis(SegmentC1.zeros(g, 1), 0, 3)
        assert out.norm_c1() == 0.0

    def test_linear_in_first_component(self):
        g = Grid.uniform(1.0, 9)
        psi = SegmentC1(g, g.nodes[:, None], np.ones((g.m, 1)))
        out = scalar_times_basis(psi, 0, 2)
        assert out.eval(-0.5)[0] == pytest.approx(-0.5, abs=1e-15)
        assert out.eval(-0.5)[1] == 0.0

    def test_definition_pointwise(self, rng):
        g = Grid.uniform(1.0, 9)
        psi = random_raw_segment(g, 1, rng)
        out = scalar_times_basis(psi, 2, 4)
        t = -0.33
        expect = np.zeros(4)
        expect[2] = psi.eval(t)[0]
        assert np.array_equal(out.eval(t), expect)

    def test_index_out_of_range(self):
        g = Grid.uniform(1.0, 9)
        with pytest.raises(IndexError):
            scalar_times_basis(SegmentC1.zeros(g, 1), 3, 3)


class TestGridMixing:
    def test_mixed_grids_rejected(self, rng):
        a = random_raw_segment(Grid.uniform(1.0, 9), 1, rng)
        b = random_raw_segment(Grid.uniform(1.0, 17), 1, rng)
        with pytest.raises(GridMismatchError):
            _ = a + b


class TestSegmentC0:
    def test_node_exact_and_linear_interp(self, rng):
        g = Grid.uniform(1.0, 5)
        seg = SegmentC0(g, np.array([1.0, 2.0, 0.0, -2.0, 4.0])[:, None])
        assert seg.eval(-0.5)[0] == 0.0
        # midpoint of [-0.5, -0.25]
        assert seg.eval(-0.375)[0] == pytest.approx(-1.0, abs=1e-15)

    def test_immutability(self, rng):
        g = Grid.uniform(1.0, 9)
        seg = random_raw_segment(g, 1, rng)
        with pytest.raises(ValueError):
            seg.values[0, 0] = 99.0


class TestSerialization:
    def test_json_round_trip(self, rng):
        g = Grid.uniform(1.5, 9)
        seg = random_raw_segment(g, 2, rng)
        doc = json.loads(seg.to_json())
        back = SegmentC1.from_json_dict(doc)
        assert node_free_equal(seg, back)

    def test_csv_has_expected_columns(self, rng):
        g = Grid.uniform(1.0, 5)
        seg = random_raw_segment(g, 2, rng)
        lines = seg.csv_text(per_interval=2).strip().splitlines()
        assert lines[0] == "t,x1,x2,dx1,dx2"
        assert len(lines) == 1 + 2 * 4 + 1


def node_free_equal(a, b):
    return bool(
        np.array_equal(a.values, b.values)
        and np.array_equal(a.derivs, b.derivs)
        and a.grid == b.grid
    )
