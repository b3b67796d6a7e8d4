import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dott.grids import fourier_grid, gauss_legendre_grid, inner_product


class TestGaussLegendre:
    def test_single_node_midpoint(self):
        g = gauss_legendre_grid(1, -1.0, 1.0)
        assert g.nodes == pytest.approx([0.0])
        assert g.weights == pytest.approx([2.0])

    def test_two_node_rule(self):
        # closed-form 2-point rule; verified by exact integration of x^2, x^3
        g = gauss_legendre_grid(2, -1.0, 1.0)
        assert g.nodes == pytest.approx([-1.0 / np.sqrt(3), 1.0 / np.sqrt(3)])
        assert g.weights == pytest.approx([1.0, 1.0])
        assert np.dot(g.weights, g.nodes**2) == pytest.approx(2.0 / 3.0)
        assert np.dot(g.weights, g.nodes**3) == pytest.approx(0.0, abs=1e-15)

    def test_quartic_integral_50_nodes(self):
        g = gauss_legendre_grid(50, -1.0, 1.0)
        assert np.dot(g.weights, g.nodes**4) == pytest.approx(0.4, abs=1e-14)

    @pytest.mark.parametrize("n", [3, 8, 25, 50])
    def test_polynomial_exactness(self, n):
        # degree 2n-1 integrated exactly
        g = gauss_legendre_grid(n, -1.0, 1.0)
        k = 2 * n - 1
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.dot(g.weights, g.nodes ** (k - 1)) == pytest.approx(
            2.0 / k if (k - 1) % 2 == 0 else 0.0, rel=1e-12, abs=1e-12
        )
        assert np.dot(g.weights, g.nodes**k) == pytest.approx(exact, abs=1e-12)

    def test_affine_map(self):
        g = gauss_legendre_grid(20, 0.0, 3.0)
        assert np.sum(g.weights) == pytest.approx(3.0, rel=1e-12)
        assert g.nodes.min() > 0.0 and g.nodes.max() < 3.0
        # integral of x^2 over [0,3] = 9
        assert np.dot(g.weights, g.nodes**2) == pytest.approx(9.0, rel=1e-12)

    def test_d1_differentiates_polynomials(self):
        g = gauss_legendre_grid(12, -1.0, 1.0)
        f = g.nodes**5
        assert g.d1 @ f == pytest.approx(5 * g.nodes**4, abs=1e-9)
        assert g.d2 @ f == pytest.approx(20 * g.nodes**3, abs=1e-8)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            gauss_legendre_grid(0, -1.0, 1.0)
        with pytest.raises(ValueError):
            gauss_legendre_grid(5, 1.0, -1.0)


class TestFourier:
    def test_four_node_layout(self):
        g = fourier_grid(4, 2 * np.pi)
        assert g.nodes == pytest.approx([0, np.pi / 2, np.pi, 3 * np.pi / 2])
        assert g.weights == pytest.approx([np.pi / 2] * 4)

    def test_excludes_right_endpoint(self):
        g = fourier_grid(16, 2 * np.pi)
        assert g.nodes.max() < 2 * np.pi

    def test_sin_squared_quadrature(self):
        g = fourier_grid(60, 2 * np.pi)
        assert np.dot(g.weights, np.sin(g.nodes) ** 2) == pytest.approx(np.pi, abs=1e-12)

    def test_d1_on_sine(self):
        for n in (16, 20, 64, 257):
            g = fourier_grid(n, 2 * np.pi)
            assert g.d1 @ np.sin(g.nodes) == pytest.approx(np.cos(g.nodes), abs=1e-10)

    def test_d2_on_cosine(self):
        g = fourier_grid(20, 2 * np.pi)
        assert g.d2 @ np.cos(g.nodes) == pytest.approx(-np.cos(g.nodes), abs=1e-10)

    def test_d2_is_not_d1_squared(self):
        # the independent closed form keeps the Nyquist mode of even grids
        g = fourier_grid(16, 2 * np.pi)
        assert not np.allclose(g.d2, g.d1 @ g.d1)

    def test_general_period(self):
        L = 3.0
        g = fourier_grid(32, L)
        f = np.sin(2 * np.pi * g.nodes / L)
        df = (2 * np.pi / L) * np.cos(2 * np.pi * g.nodes / L)
        assert g.d1 @ f == pytest.approx(df, abs=1e-9)
        assert np.sum(g.weights) == pytest.approx(L)

    def test_odd_node_count(self):
        g = fourier_grid(21, 2 * np.pi)
        assert g.d1 @ np.sin(g.nodes) == pytest.approx(np.cos(g.nodes), abs=1e-10)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            fourier_grid(1, 2 * np.pi)
        with pytest.raises(ValueError):
            fourier_grid(8, 0.0)


class TestInnerProduct:
    def test_zero_function(self):
        g = fourier_grid(8, 2 * np.pi)
        z = np.zeros(8)
        assert inner_product(g, z, z) == 0.0

    def test_unit_norm_sine(self):
        # sin(x)/sqrt(pi) has unit L2 norm on [0, 2pi]
        g = fourier_grid(60, 2 * np.pi)
        f = np.sin(g.nodes) / np.sqrt(np.pi)
        assert inner_product(g, f, f) == pytest.approx(1.0, abs=1e-12)

    def test_odd_symmetry(self):
        g = gauss_legendre_grid(50, -1.0, 1.0)
        assert inner_product(g, g.nodes, g.nodes**2) == pytest.approx(0.0, abs=1e-14)

    def test_length_mismatch(self):
        g = fourier_grid(8, 2 * np.pi)
        with pytest.raises(ValueError):
            inner_product(g, np.zeros(7), np.zeros(8))


class TestInvariants:
    @pytest.mark.parametrize(
        "g",
        [gauss_legendre_grid(30, -1.0, 1.0), fourier_grid(24, 2 * np.pi)],
        ids=["gauss-legendre", "fourier"],
    )
    def test_d1_annihilates_constants(self, g):
        assert np.abs(g.d1 @ np.ones(g.n)).max() < 1e-10

    @pytest.mark.parametrize(
        "g",
        [gauss_legendre_grid(17, -1.0, 1.0), fourier_grid(30, 2 * np.pi)],
        ids=["gauss-legendre", "fourier"],
    )
    def test_weights_sum_to_length(self, g):
        a, b = g.domain
        assert np.sum(g.weights) == pytest.approx(b - a, rel=1e-12)

    @given(st.integers(min_value=0, max_value=6), st.integers(min_value=0, max_value=6))
    @settings(max_examples=20, deadline=None)
    def test_quadrature_symmetric_bilinear(self, i, j):
        g = gauss_legendre_grid(12, -1.0, 1.0)
        f, h = g.nodes**i, g.nodes**j
        assert inner_product(g, f, h) == inner_product(g, h, f)

    def test_fourier_d1_skew_adjoint(self):
        g = fourier_grid(24, 2 * np.pi)
        f = np.exp(np.sin(g.nodes))
        h = np.cos(2 * g.nodes)
        lhs = inner_product(g, g.d1 @ f, h)
        rhs = -inner_product(g, f, g.d1 @ h)
        assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_immutable(self):
        g = fourier_grid(8, 2 * np.pi)
        with pytest.raises(ValueError):
            g.nodes[0] = 1.0

    def test_cache_key(self):
        g = fourier_grid(8, 2 * np.pi)
        assert g.key() == fourier_grid(8, 2 * np.pi).key()
        assert g.key() != fourier_grid(9, 2 * np.pi).key()
