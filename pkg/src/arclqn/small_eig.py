"""Dense factorizations for the small (k x k, k <= ~64) matrices of the
compact quasi-Newton representation.

Everything here is written out by hand rather than delegated to LAPACK so the
reduced solver has no hidden dependency on the large-scale linear algebra
stack; the matrices involved are at most a few dozen rows.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite

PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class GeneralizedEig:
    """Solution of ``M v = lambda T v``.

    Columns of ``V`` are T-orthonormal (``V.T @ T @ V == I``) and
    ``lambdas`` is sorted ascending.
    """

    V: np.ndarray
    lambdas: np.ndarray


def _as_symmetric(A, name="A"):
    A = np.array(A, dtype=float, ndmin=2)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if A.size and np.max(np.abs(A - A.T)) > SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return A


def cholesky(T, pivot_tol=PIVOT_TOL):
    """Upper-triangular ``R`` with ``T = R.T @ R``.

    Raises NotPositiveDefinite when a pivot drops to ``pivot_tol`` times the
    largest diagonal entry or below.
    """
    T = _as_symmetric(T, "T")
    n = T.shape[0]
    R = np.zeros_like(T)
    if n == 0:
        return R
    floor = pivot_tol * max(np.max(np.diag(T)), 0.0)
    for j in range(n):
        d = T[j, j] - R[:j, j] @ R[:j, j]
        if not d > floor:
            raise NotPositiveDefinite(f"pivot {j} is {d:.3e} (floor {floor:.3e})")
        r = np.sqrt(d)
        R[j, j] = r
        if j + 1 < n:
            R[j, j + 1:] = (T[j, j + 1:] - R[:j, j] @ R[:j, j + 1:]) / r
    return R


def solve_upper(R, B):
    """Back substitution for ``R X = B`` with ``R`` upper triangular."""
    B = np.array(B, dtype=float)
    X = B.copy()
    n = R.shape[0]
    for i in range(n - 1, -1, -1):
        X[i] = (B[i] - R[i, i + 1:] @ X[i + 1:]) / R[i, i]
    return X


def solve_lower(L, B):
    """Forward substitution for ``L X = B`` with ``L`` lower triangular."""
    B = np.array(B, dtype=float)
    X = B.copy()
    for i in range(L.shape[0]):
        X[i] = (B[i] - L[i, :i] @ X[:i]) / L[i, i]
    return X


def jacobi_eigh(A, tol=1e-14, max_sweeps=64):
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm is at most
    ``tol * ||A||_F``.

    Returns:
        (Q, w): orthogonal eigenvector matrix and ascending eigenvalues with
        ``A @ Q == Q @ diag(w)``.
    """
    A = _as_symmetric(A).copy()
    n = A.shape[0]
    Q = np.eye(n)
    norm_a = np.sqrt(np.sum(A * A))
    if n <= 1 or norm_a == 0.0:
        w = np.diag(A).copy()
        return Q, w
    target = tol * norm_a
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        # summed directly: ||A||^2 - ||diag||^2 cancels far above tol
        off = np.sqrt(np.sum(A[offmask] ** 2))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = float(A[p, q])
                if apq == 0.0:
                    continue
                diff = float(A[q, q] - A[p, p])
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff
                else:
                    tau = diff / (2.0 * apq)
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                app, aqq = A[p, p], A[q, q]
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                new_p = c * col_p - s * col_q
                new_q = s * col_p + c * col_q
                A[:, p] = new_p
                A[:, q] = new_q
                A[p, :] = new_p
                A[q, :] = new_q
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = A[q, p] = 0.0
                qp = Q[:, p].copy()
                Q[:, p] = c * qp - s * Q[:, q]
                Q[:, q] = s * qp + c * Q[:, q]
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return Q[:, order], w[order]


def generalized_eigh(M, T, pivot_tol=PIVOT_TOL):
    """Solve ``M v = lambda T v`` for symmetric M and SPD T.

    Reduces to the standard problem ``R^-T M R^-1`` via the Cholesky factor
    of T, diagonalizes it with Jacobi, and maps the eigenvectors back with
    ``V = R^-1 Q``.
    """
    M = _as_symmetric(M, "M")
    T = _as_symmetric(T, "T")
    if M.shape != T.shape:
        raise ValueError(f"shape mismatch: M {M.shape} vs T {T.shape}")
    R = cholesky(T, pivot_tol)
    # C = R^-T M R^-1, built as two triangular solves
    X = solve_lower(R.T, M)          # R^-T M
    C = solve_lower(R.T, X.T).T      # (R^-T (R^-T M)^T)^T = R^-T M R^-1
    C = 0.5 * (C + C.T)
    Q, w = jacobi_eigh(C)
    V = solve_upper(R, Q)
    return GeneralizedEig(V=V, lambdas=w)
