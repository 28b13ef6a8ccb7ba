"""Quadrature exactness and grid-function interpolation contracts."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsde.condexp import (
    GridFunction,
    expect,
    expect_weighted,
    gauss_hermite,
    interpolate,
    spatial_axis,
)
from nested_oracle import gaussian_moment


class TestGaussHermite:
    def test_order_one_is_mean(self):
        rule = gauss_hermite(1)
        np.testing.assert_allclose(rule.nodes, [0.0], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [1.0])

    def test_order_two_roots_of_w2_minus_1(self):
        # probabilists' H_2(w) = w^2 - 1 has roots +-1 with equal weights
        rule = gauss_hermite(2)
        np.testing.assert_allclose(sorted(rule.nodes), [-1.0, 1.0], atol=1e-14)
        np.testing.assert_allclose(rule.weights, [0.5, 0.5], atol=1e-15)

    def test_eighth_moment(self):
        rule = gauss_hermite(8)
        val = float(rule.weights @ rule.nodes**8)
        assert abs(val - 105.0) / 105.0 < 1e-10

    @pytest.mark.parametrize("order", [0, -1, 65])
    def test_order_bounds(self, order):
        with pytest.raises(ValueError):
            gauss_hermite(order)

    @pytest.mark.parametrize("order", [1, 2, 4, 8, 16, 32, 64])
    def test_rule_invariants(self, order):
        rule = gauss_hermite(order)
        assert abs(rule.weights.sum() - 1.0) <= 1e-14
        assert abs(float(rule.weights @ rule.nodes)) <= 1e-13

    @pytest.mark.parametrize("degree", range(15))
    def test_polynomial_exactness_m8(self, degree):
        rule = gauss_hermite(8)
        val = float(rule.weights @ rule.nodes**degree)
        target = gaussian_moment(degree)
        if target == 0.0:
            # odd moments vanish by cancellation; measure relative to the
            # magnitude of the cancelling terms
            scale = float(rule.weights @ np.abs(rule.nodes) ** degree)
            assert abs(val) < 1e-12 * max(1.0, scale)
        else:
            assert abs(val - target) / target < 1e-12


class TestExpect:
    def test_normalization(self, rule8):
        assert expect(rule8, 0.3, lambda w: np.ones_like(w)) == pytest.approx(1.0)

    def test_odd_symmetry(self, rule8):
        assert abs(expect(rule8, 1.0, lambda w: w)) < 1e-14

    def test_variance(self, rule8):
        assert abs(expect(rule8, 0.25, lambda w: w**2) - 0.25) < 1e-15

    def test_rejects_nonpositive_dt(self, rule8):
        with pytest.raises(ValueError):
            expect(rule8, 0.0, lambda w: w)

    def test_rejects_non_finite_integrand(self, rule8):
        with pytest.raises(ValueError):
            expect(rule8, 1.0, lambda w: np.where(w > 0, np.inf, 0.0))

    @given(
        st.lists(st.floats(-2, 2), min_size=3, max_size=3),
        st.lists(st.floats(-2, 2), min_size=3, max_size=3),
        st.floats(-3, 3),
        st.floats(-3, 3),
    )
    @settings(max_examples=60, deadline=None)
    def test_linearity(self, c1, c2, a, b):
        rule = gauss_hermite(8)
        h1 = lambda w: c1[0] + c1[1] * w + c1[2] * w**2
        h2 = lambda w: c2[0] + c2[1] * w + c2[2] * w**2
        combo = lambda w: a * h1(w) + b * h2(w)
        lhs = expect(rule, 0.7, combo)
        rhs = a * expect(rule, 0.7, h1) + b * expect(rule, 0.7, h2)
        assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(lhs))

    def test_tensor_dim2(self, rule8):
        # E[w0^2 * w1^2] factorizes to dt^2 for independent components
        val = expect(rule8, 0.5, lambda w: w[:, 0] ** 2 * w[:, 1] ** 2, dim=2)
        assert val == pytest.approx(0.25, abs=1e-14)

    def test_tensor_dim3_normalization(self, rule8):
        val = expect(rule8, 0.5, lambda w: np.ones(w.shape[0]), dim=3)
        assert val == pytest.approx(1.0, abs=1e-12)


class TestExpectWeighted:
    def test_constant_integrand(self, rule8):
        assert abs(expect_weighted(rule8, 0.5, lambda w: np.ones_like(w))) < 1e-15

    def test_linear_integrand_gives_dt(self, rule8):
        assert expect_weighted(rule8, 0.5, lambda w: w) == pytest.approx(0.5)

    def test_even_integrand_vanishes(self, rule8):
        assert abs(expect_weighted(rule8, 1.0, lambda w: w**2)) < 1e-13

    def test_component_selection(self, rule8):
        # E[w1 * w1] = dt on the chosen axis, cross-component is 0
        h = lambda w: w[:, 1]
        assert expect_weighted(rule8, 0.3, h, component=1, dim=2) == pytest.approx(0.3)
        assert abs(expect_weighted(rule8, 0.3, h, component=0, dim=2)) < 1e-14

    def test_component_out_of_range(self, rule8):
        with pytest.raises(ValueError):
            expect_weighted(rule8, 1.0, lambda w: w, component=1, dim=1)


class TestGridFunction:
    def test_node_queries_exact(self):
        f = GridFunction.sample(lambda x: np.sin(x[..., 0]), [(-2.0, 2.0, 11)])
        nodes = f.nodes(0)
        np.testing.assert_array_equal(interpolate(f, nodes), f.values)

    @given(
        st.floats(-3, 3),
        st.floats(-3, 3),
        st.lists(st.floats(-1.9, 1.9), min_size=1, max_size=5),
    )
    @settings(max_examples=60, deadline=None)
    def test_affine_exactness_1d(self, a, b, queries):
        f = GridFunction.sample(lambda x: a * x[..., 0] + b, [(-2.0, 2.0, 21)])
        q = np.array(queries)
        expected = a * q + b
        got = interpolate(f, q)
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12 * max(1.0, abs(a), abs(b)))

    def test_clamp_beyond_hi(self):
        f = GridFunction.sample(lambda x: x[..., 0] ** 2, [(-1.0, 1.0, 5)])
        assert interpolate(f, np.array([3.0]))[0] == pytest.approx(1.0)
        assert interpolate(f, np.array([-9.0]))[0] == pytest.approx(1.0)

    def test_affine_exactness_2d(self):
        fn = lambda x: 2.0 * x[..., 0] - 3.0 * x[..., 1] + 0.5
        f = GridFunction.sample(fn, [(-1.0, 1.0, 9), (-2.0, 2.0, 7)])
        q = np.array([[0.31, -1.7], [0.0, 0.0], [-0.99, 1.99]])
        np.testing.assert_allclose(interpolate(f, q), fn(q), atol=1e-13)

    def test_clamp_2d(self):
        fn = lambda x: x[..., 0] + x[..., 1]
        f = GridFunction.sample(fn, [(-1.0, 1.0, 5), (-1.0, 1.0, 5)])
        assert interpolate(f, np.array([[5.0, 0.5]]))[0] == pytest.approx(1.5)

    def test_trilinear_matches_function_on_nodes(self):
        fn = lambda x: x[..., 0] * x[..., 1] + x[..., 2]
        f = GridFunction.sample(fn, [(-1.0, 1.0, 4), (-1.0, 1.0, 5), (-1.0, 1.0, 3)])
        q = np.stack(np.meshgrid(f.nodes(0), f.nodes(1), f.nodes(2), indexing="ij"), axis=-1)
        np.testing.assert_allclose(interpolate(f, q), f.values, atol=1e-14)

    def test_rejects_single_node_axis(self):
        with pytest.raises(ValueError):
            GridFunction(((0.0, 1.0, 1),), np.zeros(1))

    def test_rejects_non_finite_values(self):
        with pytest.raises(ValueError):
            GridFunction(((0.0, 1.0, 3),), np.array([0.0, np.nan, 1.0]))

    def test_rejects_dim4(self):
        with pytest.raises(ValueError):
            GridFunction(((0.0, 1.0, 2),) * 4, np.zeros((2, 2, 2, 2)))


def test_spatial_axis_scaling():
    lo, hi, count = spatial_axis(1.0, 2.0, 4.0, count=101, width=6.0)
    assert count == 101
    assert lo == pytest.approx(1.0 - 24.0)
    assert hi == pytest.approx(1.0 + 24.0)
