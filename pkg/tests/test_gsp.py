import numpy as np
import pytest

from conftest import random_adjacency
from tgl.errors import ShapeError
from tgl.gsp import (
    apply_poly_filter, build_basis, characteristic_polynomial, chebyshev_basis, chebyshev_terms,
    chebyshev_values, gft, graph_convolve, igft, poly_response, spectral_filter,
)

K2 = np.array([[0.0, 1.0], [1.0, 0.0]])


def cycle(n):
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i + 1) % n] = A[(i + 1) % n, i] = 1
    return A


class TestBasis:
    def test_k2_normalized(self):
        np.testing.assert_allclose(build_basis(K2).eigenvalues, [0, 2], atol=1e-12)

    def test_c4(self):
        b = build_basis(cycle(4))
        np.testing.assert_allclose(b.eigenvalues, [0, 1, 1, 2], atol=1e-12)
        np.testing.assert_allclose(b.eigenvectors.T @ b.eigenvectors, np.eye(4), atol=1e-12)

    def test_edgeless_laplacian(self):
        np.testing.assert_array_equal(build_basis(np.zeros((3, 3)), "laplacian").eigenvalues, 0)

    def test_aliases_and_lambda_max(self):
        b = build_basis(cycle(5), "lap")
        assert b.shift_kind == "laplacian"
        assert b.lambda_max == pytest.approx(max(2 - 2 * np.cos(2 * np.pi * np.arange(5) / 5)))

    def test_directed_rejected(self):
        with pytest.raises(ValueError):
            build_basis(np.array([[0.0, 1.0], [0.0, 0.0]]), "adjacency")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_basis(K2, "random_walk")

    def test_immutable(self):
        b = build_basis(K2)
        with pytest.raises(ValueError):
            b.eigenvalues[0] = 5.0


class TestTransform:
    def test_eigenvector_maps_to_basis_vector(self):
        b = build_basis(cycle(6), "adjacency")
        np.testing.assert_allclose(gft(b, b.eigenvectors[:, 3]), np.eye(6)[3], atol=1e-12)

    def test_k2_constant_signal(self):
        y = gft(build_basis(K2), [1.0, 1.0])
        np.testing.assert_allclose(np.abs(y), [np.sqrt(2), 0], atol=1e-12)

    def test_roundtrip_and_parseval(self, rng):
        b = build_basis(random_adjacency(8, 0.4, 1))
        x = rng.standard_normal(8)
        np.testing.assert_allclose(igft(b, gft(b, x)), x, atol=1e-10)
        assert np.linalg.norm(gft(b, x)) == pytest.approx(np.linalg.norm(x), abs=1e-10)

    def test_length_mismatch(self):
        b = build_basis(K2)
        with pytest.raises(ShapeError):
            gft(b, np.ones(3))
        with pytest.raises(ShapeError):
            graph_convolve(b, np.ones(2), np.ones(3))


class TestConvolution:
    def test_all_pass(self, rng):
        b = build_basis(random_adjacency(7, 0.5, 2))
        g = igft(b, np.ones(7))
        x = rng.standard_normal(7)
        np.testing.assert_allclose(graph_convolve(b, x, g), x, atol=1e-12)

    def test_commutative_and_simplified_form(self, rng):
        b = build_basis(random_adjacency(7, 0.5, 3))
        x, g = rng.standard_normal(7), rng.standard_normal(7)
        np.testing.assert_allclose(graph_convolve(b, x, g), graph_convolve(b, g, x), atol=1e-12)
        V = b.eigenvectors
        np.testing.assert_allclose(graph_convolve(b, x, g), V @ np.diag(V.T @ g) @ V.T @ x, atol=1e-12)

    def test_convolution_equals_polynomial_filter(self, rng):
        b = build_basis(random_adjacency(9, 0.4, 4))
        h = rng.standard_normal(4)
        g = igft(b, poly_response(h, b.eigenvalues))
        x = rng.standard_normal(9)
        np.testing.assert_allclose(graph_convolve(b, x, g), apply_poly_filter(b.shift, h, x), atol=1e-10)


class TestPolynomialFilter:
    def test_identity_and_shift(self, rng):
        S = random_adjacency(5, 0.5, 5)
        x = rng.standard_normal(5)
        np.testing.assert_array_equal(apply_poly_filter(S, [1.0], x), x)
        np.testing.assert_allclose(apply_poly_filter(S, [0.0, 1.0], x), S @ x)

    def test_spectral_agreement(self, rng):
        for seed in range(20):
            b = build_basis(random_adjacency(10, 0.4, seed))
            h = rng.standard_normal(rng.integers(1, 10))
            x = rng.standard_normal((10, 2))
            spatial = apply_poly_filter(b.shift, h, x)
            spectral = spectral_filter(b, poly_response(h, b.eigenvalues), x)
            assert np.linalg.norm(spatial - spectral) <= 1e-8 * max(np.linalg.norm(spectral), 1.0)

    def test_degree_bound(self):
        with pytest.raises(ValueError):
            apply_poly_filter(np.eye(3), [1, 1, 1, 1], np.ones(3))

    def test_characteristic_polynomial_roots(self):
        A = random_adjacency(6, 0.5, 6)
        roots = np.sort(np.roots(characteristic_polynomial(A)).real)
        np.testing.assert_allclose(roots, np.linalg.eigvalsh(A), atol=1e-6)

    def test_cayley_hamilton(self, rng):
        # the characteristic polynomial annihilates the matrix
        A = random_adjacency(5, 0.6, 7)
        c = characteristic_polynomial(A)
        P = sum(ck * np.linalg.matrix_power(A, 5 - k) for k, ck in enumerate(c))
        np.testing.assert_allclose(P, 0, atol=1e-8)


class TestChebyshev:
    def test_low_orders(self, rng):
        M = random_adjacency(5, 0.5, 8) * 0.3
        x = rng.standard_normal(5)
        T = chebyshev_basis(M, 2)
        np.testing.assert_array_equal(T[0](x), x)
        np.testing.assert_allclose(T[1](x), M @ x)
        np.testing.assert_allclose(T[2](x), 2 * M @ (M @ x) - x)

    def test_cosine_identity(self):
        phi = np.linspace(0.1, 3.0, 6)
        terms = chebyshev_terms(np.diag(np.cos(phi)), np.eye(6), 7)
        for k, Tk in enumerate(terms):
            np.testing.assert_allclose(np.diag(Tk), np.cos(k * phi), atol=1e-12)
        np.testing.assert_allclose(chebyshev_values(np.cos(phi), 7)[5], np.cos(5 * phi), atol=1e-12)

    def test_negative_order(self):
        with pytest.raises(ValueError):
            chebyshev_basis(np.eye(2), -1)
