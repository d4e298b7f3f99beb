import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unifier.errors import ParameterError
from unifier.graph import (
    half_sq_distances,
    initial_knn_graph,
    laplacian,
    similarity_from_distances,
    update_similarity,
)

from oracles import quadratic_form_sum, sparse_simplex_qp


def _assert_valid(g, k):
    S = g.S
    assert np.all(np.diag(S) == 0)
    assert np.all(S >= 0) and np.all(S <= 1)
    np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((S > 0).sum(axis=1) <= k)


class TestClosedForm:
    def test_collinear_points(self):
        g = initial_knn_graph(np.array([[0.0], [1.0], [10.0]]), 1)
        np.testing.assert_array_equal(g.S, [[0, 1, 0], [1, 0, 0], [0, 1, 0]])

    def test_two_points(self):
        g = initial_knn_graph(np.array([[0.0, 1.0], [2.0, 3.0]]), 1)
        np.testing.assert_array_equal(g.S, [[0, 1], [1, 0]])

    def test_worked_row(self):
        # sample 0 at distances 1, 2, 4 from the others
        B = np.array([[0, 1, 2, 4], [1, 0, 9, 9], [2, 9, 0, 9], [4, 9, 9, 0]], dtype=float)
        g = similarity_from_distances(B, 2)
        np.testing.assert_allclose(g.S[0], [0, 3 / 5, 2 / 5, 0], rtol=0, atol=1e-15)
        assert g.xi[0] == pytest.approx(5 / 2)
        val, s = sparse_simplex_qp(B[0, 1:], g.xi[0], 2)
        np.testing.assert_allclose(s, g.S[0, 1:], atol=1e-12)

    def test_k1(self):
        B = np.array([[0, 2, 5], [2, 0, 1], [5, 1, 0]], dtype=float)
        g = similarity_from_distances(B, 1)
        np.testing.assert_array_equal(g.S[0], [0, 1, 0])

    def test_equal_distances_fall_back_to_uniform(self):
        B = np.ones((5, 5)) - np.eye(5)
        g = similarity_from_distances(B, 2)
        np.testing.assert_allclose(g.S[0], [0, 0.5, 0.5, 0, 0])
        np.testing.assert_allclose(g.S[3], [0.5, 0.5, 0, 0, 0])
        np.testing.assert_array_equal(g.xi, 0)

    def test_duplicate_points_do_not_self_connect(self):
        X = np.zeros((4, 2))
        g = initial_knn_graph(X, 2)
        assert np.all(np.diag(g.S) == 0)
        _assert_valid(g, 2)

    def test_k_out_of_range(self):
        with pytest.raises(ParameterError):
            initial_knn_graph(np.zeros((3, 1)), 3)
        with pytest.raises(ParameterError):
            initial_knn_graph(np.zeros((3, 1)), 0)

    def test_brute_force_random(self, rng):
        X = rng.standard_normal((8, 3))
        g = initial_knn_graph(X, 3)
        B = half_sq_distances(X)
        for i in range(8):
            others = [j for j in range(8) if j != i]
            val, s = sparse_simplex_qp(B[i, others], g.xi[i], 3)
            np.testing.assert_allclose(g.S[i, others], s, atol=1e-8)
            assert np.count_nonzero(g.S[i]) == 3

    def test_update_uses_projection(self, rng):
        X = rng.standard_normal((7, 4))
        W = rng.standard_normal((4, 4))
        np.testing.assert_array_equal(update_similarity(X, W, 2).S, initial_knn_graph(X @ W, 2).S)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 12), k=st.integers(1, 4))
    def test_feasible_and_better_than_random(self, seed, n, k):
        k = min(k, n - 2)
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, 3))
        g = initial_knn_graph(X, k)
        _assert_valid(g, k)
        B = half_sq_distances(X)
        for i in range(n):
            if g.xi[i] == 0:
                continue
            best = B[i] @ g.S[i] + g.xi[i] * g.S[i] @ g.S[i]
            others = np.array([j for j in range(n) if j != i])
            for _ in range(100):
                supp = rng.choice(others, size=k, replace=False)
                s = np.zeros(n)
                s[supp] = rng.dirichlet(np.ones(k))
                assert best <= B[i] @ s + g.xi[i] * s @ s + 1e-12

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), shift=st.floats(0.0, 100.0))
    def test_shift_invariance(self, seed, shift):
        rng = np.random.default_rng(seed)
        B = half_sq_distances(rng.standard_normal((6, 2)))
        Bs = B + shift
        np.fill_diagonal(Bs, 0.0)
        np.testing.assert_allclose(
            similarity_from_distances(Bs, 2).S, similarity_from_distances(B, 2).S, atol=1e-9
        )


class TestLaplacian:
    def test_two_nodes(self):
        np.testing.assert_array_equal(laplacian(np.array([[0.0, 1.0], [1.0, 0.0]])).L, [[1, -1], [-1, 1]])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 15))
    def test_row_sums_and_psd(self, seed, n):
        rng = np.random.default_rng(seed)
        L = laplacian(initial_knn_graph(rng.standard_normal((n, 2)), min(3, n - 2))).L
        np.testing.assert_allclose(L @ np.ones(n), 0, atol=1e-12)
        np.testing.assert_allclose(L, L.T, atol=0)
        assert np.linalg.eigvalsh(L).min() >= -1e-10

    def test_quadratic_form(self, rng):
        g = initial_knn_graph(rng.standard_normal((6, 3)), 2)
        L = laplacian(g).L
        for _ in range(5):
            x = rng.standard_normal(6)
            assert x @ L @ x == pytest.approx(quadratic_form_sum(g.S, x), abs=1e-10)
