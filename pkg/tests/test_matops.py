from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccep import matops
from ccep.errors import RankDeficient


class TestOlsSolve:
    def test_matches_normal_equations(self, rng):
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        sol = matops.ols_solve(X, y)
        expected = np.linalg.solve(X.T @ X, X.T @ y)
        np.testing.assert_allclose(sol.coefficients, expected, rtol=1e-12, atol=1e-12)
        assert sol.rank == 3
        assert sol.coefficients.shape == (3,)

    def test_multiple_rhs(self, rng):
        X = rng.normal(size=(20, 2))
        Y = rng.normal(size=(20, 4))
        sol = matops.ols_solve(X, Y)
        assert sol.coefficients.shape == (2, 4)
        for c in range(4):
            np.testing.assert_allclose(sol.coefficients[:, c], matops.ols_solve(X, Y[:, c]).coefficients)

    def test_collinear_design_raises_with_condition(self, rng):
        a = rng.normal(size=10)
        X = np.column_stack([a, 2 * a])
        with pytest.raises(RankDeficient) as err:
            matops.ols_solve(X, rng.normal(size=10))
        assert "condition number" in str(err.value)
        assert err.value.rank == 1 and err.value.expected == 2

    def test_minimum_norm_when_allowed(self, rng):
        a = rng.normal(size=10)
        X = np.column_stack([a, a])
        y = 3 * a
        sol = matops.ols_solve(X, y, require_full_rank=False)
        np.testing.assert_allclose(sol.coefficients, np.linalg.pinv(X) @ y, atol=1e-12)
        assert sol.rank == 1

    def test_fewer_rows_than_columns(self):
        with pytest.raises(RankDeficient):
            matops.ols_solve(np.ones((2, 3)), np.ones(2))

    def test_rhs_row_mismatch(self):
        with pytest.raises(ValueError):
            matops.ols_solve(np.ones((4, 1)), np.ones(3))


class TestResidualMaker:
    @settings(max_examples=40, deadline=None)
    @given(T=st.integers(3, 9), m=st.integers(1, 2), seed=st.integers(0, 2**31))
    def test_symmetric_idempotent_annihilating(self, T, m, seed):
        A = np.random.default_rng(seed).normal(size=(T, m))
        M = matops.residual_maker(A)
        np.testing.assert_allclose(M, M.T, atol=1e-10)
        np.testing.assert_allclose(M @ M, M, atol=1e-10)
        np.testing.assert_allclose(M @ A, 0.0, atol=1e-10)
        assert np.trace(M) == pytest.approx(T - m, abs=1e-10)

    def test_matches_pinv_projector(self, rng):
        A = rng.normal(size=(7, 3))
        oracle = np.eye(7) - A @ np.linalg.pinv(A)
        np.testing.assert_allclose(matops.residual_maker(A), oracle, atol=1e-12)

    def test_ones_gives_centering(self):
        M = matops.residual_maker(np.ones((4, 1)))
        np.testing.assert_allclose(M, np.eye(4) - 0.25, atol=1e-15)

    def test_rank_deficient(self):
        A = np.column_stack([np.ones(5), 2 * np.ones(5)])
        with pytest.raises(RankDeficient):
            matops.residual_maker(A)

    def test_projection_coefficients(self, rng):
        A = rng.normal(size=(6, 2))
        np.testing.assert_allclose(matops.projection_coefficients(A),
                                   A @ np.linalg.inv(A.T @ A), atol=1e-12)


class TestKroneckerAlgebra:
    def test_vec_is_column_major(self):
        A = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(matops.vec(A), [1, 3, 5, 2, 4, 6])
        np.testing.assert_array_equal(matops.unvec(matops.vec(A), 3, 2), A)

    def test_unvec_size_check(self):
        with pytest.raises(ValueError):
            matops.unvec(np.ones(5), 2, 2)

    @pytest.mark.parametrize("T", [1, 2, 3, 5])
    def test_commutation_definition(self, T, rng):
        K = matops.commutation_matrix(T)
        A = rng.normal(size=(T, T))
        assert np.array_equal(K @ matops.vec(A), matops.vec(A.T))
        assert np.array_equal(K @ K, np.eye(T * T))
        assert np.array_equal(K, K.T)

    def test_commutation_explicit_t2(self):
        expected = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=float)
        assert np.array_equal(matops.commutation_matrix(2), expected)

    def test_vec_of_product_identity(self, rng):
        # vec(ABC) = (C' kron A) vec(B)
        A, B, C = rng.normal(size=(3, 2)), rng.normal(size=(2, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose(matops.kron(C.T, A) @ matops.vec(B), matops.vec(A @ B @ C),
                                   atol=1e-12)

    def test_kron_blocks(self):
        a = np.array([[1.0, 2.0]])
        b = np.array([[1.0], [3.0]])
        np.testing.assert_array_equal(matops.kron(a, b), [[1, 2], [3, 6]])


def test_numerical_rank():
    assert matops.numerical_rank(np.eye(3)) == (3, 1.0)
    r, c = matops.numerical_rank(np.zeros((3, 2)))
    assert r == 0 and c == np.inf
