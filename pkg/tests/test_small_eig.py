import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arclqn import NotPositiveDefinite, cholesky, generalized_eigh, jacobi_eigh


def test_cholesky_scalar():
    np.testing.assert_allclose(cholesky([[4.0]]), [[2.0]])


def test_cholesky_two_by_two():
    # R^T R = [[4, 2], [2, 1 + 4]]
    R = cholesky([[4.0, 2.0], [2.0, 5.0]])
    np.testing.assert_allclose(R, [[2.0, 1.0], [0.0, 2.0]], atol=1e-15)


def test_cholesky_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky([[1.0, 2.0], [2.0, 1.0]])


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ValueError):
        cholesky([[1.0, 0.5], [0.0, 1.0]])


def test_cholesky_reconstructs_random_spd():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((8, 8))
    T = A @ A.T + np.eye(8)
    R = cholesky(T)
    assert np.allclose(R, np.triu(R))
    assert np.abs(R.T @ R - T).max() <= 1e-12 * np.abs(T).max()


def test_jacobi_diagonal():
    Q, w = jacobi_eigh(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(w, [1.0, 3.0])
    np.testing.assert_allclose(np.abs(Q), [[0.0, 1.0], [1.0, 0.0]])


def test_jacobi_swap_matrix():
    _, w = jacobi_eigh([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(w, [-1.0, 1.0], atol=1e-15)


def test_jacobi_trace_and_determinant():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((5, 5))
    A = A + A.T
    Q, w = jacobi_eigh(A)
    assert abs(w.sum() - np.trace(A)) <= 1e-10 * max(1.0, abs(np.trace(A)))
    det = np.linalg.det(A)
    assert abs(np.prod(w) - det) <= 1e-10 * max(1.0, abs(det))
    assert np.abs(A @ Q - Q * w).max() <= 1e-10 * np.abs(A).max()
    assert np.abs(Q.T @ Q - np.eye(5)).max() <= 1e-12


def test_generalized_scalar():
    ge = generalized_eigh([[2.0]], [[4.0]])
    np.testing.assert_allclose(ge.lambdas, [0.5])
    np.testing.assert_allclose(np.abs(ge.V), [[0.5]])


def test_generalized_identity():
    ge = generalized_eigh(np.eye(2), np.eye(2))
    np.testing.assert_allclose(ge.lambdas, [1.0, 1.0])
    np.testing.assert_allclose(ge.V.T @ ge.V, np.eye(2), atol=1e-15)


def test_generalized_standard_problem():
    ge = generalized_eigh(np.diag([1.0, 2.0]), np.eye(2))
    np.testing.assert_allclose(ge.lambdas, [1.0, 2.0])


def test_generalized_propagates_not_pd():
    with pytest.raises(NotPositiveDefinite):
        generalized_eigh(np.eye(2), [[1.0, 2.0], [2.0, 1.0]])


@settings(max_examples=60, deadline=None)
@given(k=st.integers(1, 10), seed=st.integers(0, 2 ** 32 - 1))
def test_generalized_residual_and_normalization(k, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((k, k))
    T = A @ A.T + 0.1 * np.eye(k)
    M = rng.standard_normal((k, k))
    M = M + M.T
    ge = generalized_eigh(M, T)
    V, lam = ge.V, ge.lambdas
    assert np.all(np.diff(lam) >= 0)
    res = np.linalg.norm(M @ V - T @ V * lam)
    assert res <= 1e-9 * (np.linalg.norm(M) + np.linalg.norm(T))
    assert np.abs(V.T @ T @ V - np.eye(k)).max() <= 1e-10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_generalized_congruence_invariance(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    T = A @ A.T + 0.5 * np.eye(3)
    M = rng.standard_normal((3, 3))
    M = M + M.T
    C = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    l1 = generalized_eigh(M, T).lambdas
    l2 = generalized_eigh(C.T @ M @ C, C.T @ T @ C).lambdas
    np.testing.assert_allclose(l1, l2, rtol=1e-8, atol=1e-8)
