"""Least-squares kernel tests.

Expected values are derived by hand from the normal equations or checked
against numpy.linalg.pinv as an independent oracle, never against the
implementation itself.
"""

import numpy as np
import pytest

from mcce import ValidationError, lstsq, residualize, truncated_svd
from mcce.linalg import as_matrix, max_abs_cross


# --- lstsq ------------------------------------------------------------

def test_lstsq_normal_equations_by_hand():
    # A = [1; 1], B = [1; 3]: AtA = 2, AtB = 4, coef = 2,
    # residual = (1-2)^2 + (3-2)^2 = 2.
    sol = lstsq([[1.0], [1.0]], [[1.0], [3.0]])
    assert sol.coefficients.shape == (1, 1)
    assert abs(sol.coefficients[0, 0] - 2.0) < 1e-12
    assert abs(sol.residual_sos - 2.0) < 1e-12
    assert sol.effective_rank == 1


def test_lstsq_exact_system_zero_residual():
    A = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    X = np.array([[3.0], [-1.0]])
    sol = lstsq(A, A @ X)
    assert np.allclose(sol.coefficients, X, atol=1e-12)
    assert sol.residual_sos < 1e-20


def test_lstsq_min_norm_on_duplicated_column():
    # x1 + x2 = 3 has a line of solutions; the minimum-norm one is (1.5, 1.5).
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    B = np.array([[3.0], [6.0]])
    sol = lstsq(A, B)
    assert np.allclose(sol.coefficients, [[1.5], [1.5]], atol=1e-12)
    assert sol.effective_rank == 1


def test_lstsq_min_norm_matches_pinv_oracle():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n, p, q, r = 12, 7, 3, 4
        A = rng.standard_normal((n, r)) @ rng.standard_normal((r, p))  # rank r < p
        B = rng.standard_normal((n, q))
        sol = lstsq(A, B)
        assert np.allclose(sol.coefficients, np.linalg.pinv(A) @ B, atol=1e-8)
        assert sol.effective_rank == r


def test_lstsq_one_hot_block_rank():
    # two attributes x two levels: blocks sum to the ones column, rank 3
    C = np.array(
        [
            [1.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 1.0],
            [0.0, 1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
        ]
    )
    assert lstsq(C, np.eye(4)).effective_rank == 3


def test_lstsq_ridge_by_hand():
    # coef = AtB / (AtA + ridge) = 4 / (2 + 2) = 1
    sol = lstsq([[1.0], [1.0]], [[1.0], [3.0]], ridge=2.0)
    assert abs(sol.coefficients[0, 0] - 1.0) < 1e-12


def test_lstsq_ridge_matches_normal_equations():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((20, 6))
    B = rng.standard_normal((20, 2))
    ridge = 0.37
    direct = np.linalg.solve(A.T @ A + ridge * np.eye(6), A.T @ B)
    assert np.allclose(lstsq(A, B, ridge=ridge).coefficients, direct, atol=1e-10)


def test_lstsq_ridge_limit_recovers_unregularized():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((30, 5))
    B = rng.standard_normal((30, 3))
    plain = lstsq(A, B).coefficients
    tiny = lstsq(A, B, ridge=1e-12).coefficients
    assert np.max(np.abs(plain - tiny)) < 1e-6


def test_lstsq_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        lstsq([[1.0, np.nan]], [[1.0]])
    with pytest.raises(ValidationError):
        lstsq([[1.0], [1.0]], [[1.0]])  # row mismatch
    with pytest.raises(ValidationError):
        lstsq([[1.0]], [[1.0]], ridge=-0.1)


# --- residualize ------------------------------------------------------

def test_residualize_removes_column_space():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(8, 51))
        p = int(rng.integers(1, min(n, 11)))
        C = rng.standard_normal((n, p))
        H = rng.standard_normal((n, 6))
        coef, R = residualize(C, H)
        assert np.allclose(C @ coef + R, H, atol=1e-10)
        assert max_abs_cross(C, R) < 1e-10


def test_residualize_is_idempotent():
    rng = np.random.default_rng(4)
    C = rng.standard_normal((15, 4))
    H = rng.standard_normal((15, 5))
    _, R1 = residualize(C, H)
    coef2, R2 = residualize(C, R1)
    assert np.max(np.abs(coef2)) < 1e-10
    assert np.allclose(R1, R2, atol=1e-10)


def test_residualize_exact_fit_leaves_zero():
    rng = np.random.default_rng(5)
    C = rng.standard_normal((10, 3))
    H = C @ rng.standard_normal((3, 4))
    _, R = residualize(C, H)
    assert np.max(np.abs(R)) < 1e-10


# --- truncated_svd ----------------------------------------------------

def test_truncated_svd_diagonal_by_hand():
    R = np.diag([3.0, 2.0, 1.0])
    basis, scores = truncated_svd(R, 2)
    assert np.allclose(basis, [[1, 0], [0, 1], [0, 0]], atol=1e-12)
    assert np.allclose(scores, [[3, 0], [0, 2], [0, 0]], atol=1e-12)


def test_truncated_svd_full_rank_reconstruction():
    rng = np.random.default_rng(6)
    R = rng.standard_normal((10, 6))
    basis, scores = truncated_svd(R, 6)
    assert np.allclose(scores @ basis.T, R, atol=1e-8)
    assert np.allclose(basis.T @ basis, np.eye(6), atol=1e-10)


def test_truncated_svd_sign_convention_is_stable():
    rng = np.random.default_rng(7)
    R = rng.standard_normal((8, 5))
    basis_pos, _ = truncated_svd(R, 3)
    basis_neg, _ = truncated_svd(-R, 3)
    for col in range(3):
        pivot = int(np.argmax(np.abs(basis_pos[:, col])))
        assert basis_pos[pivot, col] >= 0.0
        # flipping R flips U, not the pinned V columns
        assert np.allclose(basis_pos[:, col], basis_neg[:, col], atol=1e-10)


def test_truncated_svd_zero_matrix_gives_zero_scores():
    basis, scores = truncated_svd(np.zeros((4, 3)), 2)
    assert basis.shape == (3, 2)
    assert np.max(np.abs(scores)) == 0.0


def test_truncated_svd_floor_zeroes_noise_directions():
    # singular values 5 and 1e-14: a floor between them wipes the second
    U = np.eye(4)[:, :2]
    V = np.eye(3)[:, :2]
    R = U @ np.diag([5.0, 1e-14]) @ V.T
    basis, scores = truncated_svd(R, 2, floor=1e-8)
    assert np.allclose(basis[:, 0], [1.0, 0.0, 0.0], atol=1e-10)
    assert np.max(np.abs(basis[:, 1])) == 0.0
    assert np.max(np.abs(scores[:, 1])) == 0.0
    # and without a floor the direction survives
    basis, _ = truncated_svd(R, 2, floor=0.0)
    assert np.max(np.abs(basis[:, 1])) > 0.9


def test_truncated_svd_rejects_bad_j_and_floor():
    R = np.ones((4, 3))
    for j in (0, 4, -1, 1.5, "2"):
        with pytest.raises(ValidationError):
            truncated_svd(R, j)
    with pytest.raises(ValidationError):
        truncated_svd(R, 2, floor=-1.0)
    with pytest.raises(ValidationError):
        truncated_svd(R, 2, floor=np.nan)


# --- helpers ----------------------------------------------------------

def test_as_matrix_coercion_and_errors():
    M = as_matrix([[1, 2], [3, 4]], "M")
    assert M.dtype == np.float64 and M.shape == (2, 2)
    with pytest.raises(ValidationError):
        as_matrix([1.0, 2.0], "M")  # 1-D
    with pytest.raises(ValidationError):
        as_matrix(np.zeros((0, 2)), "M")
    with pytest.raises(ValidationError):
        as_matrix([[np.inf]], "M")


def test_max_abs_cross_by_hand():
    A = np.array([[1.0, 0.0], [0.0, 2.0]])
    B = np.array([[0.0, 3.0], [1.0, 0.0]])
    # A.T @ B = [[0, 3], [2, 0]]
    assert max_abs_cross(A, B) == 3.0
    with pytest.raises(ValidationError):
        max_abs_cross(A, np.ones((3, 2)))
