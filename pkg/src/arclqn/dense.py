"""Dense reference implementations used as oracles and as the explicit-SR1
timing baseline.

These routines deliberately share no code with the reduced solver: the
Newton iteration here follows the textbook Cholesky-based scheme
(``(B + lam I) = L L^T``, ``L w = s``) and the leftmost eigenpair comes from a
full symmetric eigendecomposition.
"""
import time

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy.stats import qmc

from .errors import BenchTimeout, DomainError, MaxIterations
from .lqn import ZERO_RESIDUAL_RTOL
from .subproblem import Case, SubproblemSolution

FULL_EIGH_MAX_N = 2000


def dense_sr1_update(B, s, y, eps_curv=1e-8, kappa=1e-7):
    """Recursive SR1 update of an explicit matrix.

    Uses the same scaling and skip rule as ``LqnState.try_update``. Returns
    the input object unchanged when the pair is skipped.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = max(np.linalg.norm(s), kappa)
    s, y = s / scale, y / scale
    bs = B @ s
    r = y - bs
    nr = np.linalg.norm(r)
    sr = s @ r
    if (nr <= ZERO_RESIDUAL_RTOL * (np.linalg.norm(y) + np.linalg.norm(bs))
            or abs(sr) <= eps_curv * np.linalg.norm(s) * nr):
        return B
    return B + np.outer(r, r) / sr


def dense_model(B, g, sigma, s, f0=0.0):
    s = np.asarray(s, dtype=float)
    return f0 + s @ g + 0.5 * s @ (B @ s) + sigma / 3.0 * np.linalg.norm(s) ** 3


def _leftmost(B, need_full):
    n = B.shape[0]
    if need_full or n <= FULL_EIGH_MAX_N:
        w, U = scipy.linalg.eigh(B)
        return w, U
    w, U = scipy.sparse.linalg.eigsh(B, k=1, which="SA", tol=1e-12)
    return w, U


def dense_solve_subproblem(B, g, sigma, nu=1e-7, eps_shift=1e-4, hard_rtol=1e-10,
                           max_iters=200, deadline=None):
    """Cholesky-based Newton solver for the cubic model with a dense ``B``.

    ``deadline`` is an absolute ``time.perf_counter()`` value; exceeding it
    between factorizations raises BenchTimeout.
    """
    B = np.asarray(B, dtype=float)
    g = np.asarray(g, dtype=float)
    n = B.shape[0]

    def check_deadline():
        if deadline is not None and time.perf_counter() > deadline:
            raise BenchTimeout("dense solve exceeded its deadline")

    def done(s, lam, case, iters):
        dec = -(s @ g + 0.5 * s @ (B @ s) + sigma / 3.0 * np.linalg.norm(s) ** 3)
        return SubproblemSolution(s, float(lam), case, iters, float(dec))

    w, U = _leftmost(B, need_full=False)
    check_deadline()
    lam1 = float(w[0])
    gnorm = np.linalg.norm(g)
    lower = max(0.0, -lam1)

    if lam1 < 0 and (U.shape[1] == n or abs(U[:, 0] @ g) <= hard_rtol * gnorm):
        if U.shape[1] < n:
            w, U = _leftmost(B, need_full=True)
        cluster = w <= lam1 + 1e-10 * max(1.0, abs(lam1))
        coords = U.T @ g
        if np.linalg.norm(coords[cluster]) <= hard_rtol * gnorm:
            # pseudo-inverse solution at lam = -lambda_1
            shifted = w[~cluster] - lam1
            s_bd = -U[:, ~cluster] @ (coords[~cluster] / shifted)
            nb = np.linalg.norm(s_bd)
            radius = -lam1 / sigma
            band = nu
            if nb < radius - band:
                alpha = np.sqrt(radius ** 2 - nb ** 2)
                return done(s_bd + alpha * U[:, 0], -lam1, Case.HARD_CASE, 0)
            if nb <= radius + band:
                return done(s_bd, -lam1, Case.BOUNDARY_SADDLE, 0)

    eig_cache = {}
    A = np.empty_like(B)

    def s_and_w(lam):
        check_deadline()
        np.copyto(A, B)
        A.flat[::n + 1] += lam
        try:
            L = scipy.linalg.cholesky(A, lower=True, overwrite_a=True, check_finite=False)
        except np.linalg.LinAlgError:
            if "w" not in eig_cache:
                eig_cache["w"], eig_cache["U"] = scipy.linalg.eigh(B)
            we, Ue = eig_cache["w"], eig_cache["U"]
            d = we + lam
            if np.any(d <= 0):
                raise DomainError(f"B + {lam!r} I is not positive definite")
            c = Ue.T @ g
            s = -Ue @ (c / d)
            return s, float(np.sum(c ** 2 / d ** 3))
        s = -scipy.linalg.cho_solve((L, True), g, check_finite=False)
        w_vec = scipy.linalg.solve_triangular(L, s, lower=True, check_finite=False)
        return s, float(w_vec @ w_vec)

    lam = lower + eps_shift
    s, w2 = s_and_w(lam)
    for _ in range(64):
        if np.linalg.norm(s) >= lam / sigma:
            break
        nxt = lower + 0.1 * (lam - lower)
        if not nxt > lower:
            break
        lam = nxt
        s, w2 = s_and_w(lam)

    for it in range(max_iters + 1):
        sn = np.linalg.norm(s)
        r = lam / sigma
        if abs(sn - r) < nu:
            return done(s, lam, Case.INTERIOR, it)
        if it == max_iters:
            break
        dlam = lam * (sn - r) / (sn + r * (lam * w2 / sn ** 2))
        new = lam + dlam
        if new <= lower:
            new = 0.5 * (lam + lower)
        lam = new
        s, w2 = s_and_w(lam)
    raise MaxIterations("dense Newton did not converge")


def brute_force_min(B, g, sigma, radius, samples=100_000, seed=0, f0=0.0):
    """Sampling-based minimum of the cubic model over a ball (n <= 3).

    Scrambled Sobol points in the ball of the given radius, followed by a
    compass-search polish of the best point.
    """
    B = np.asarray(B, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    if n > 3:
        raise ValueError("brute force is only meant for n <= 3")

    def model(P):
        quad = 0.5 * np.einsum("ij,jk,ik->i", P, B, P)
        norms = np.linalg.norm(P, axis=1)
        return f0 + P @ g + quad + sigma / 3.0 * norms ** 3

    m_pow = int(np.ceil(np.log2(max(samples, 2))))
    pts = qmc.Sobol(d=n, scramble=True, seed=seed).random_base2(m_pow)[:samples]
    P = (2.0 * pts - 1.0) * radius
    P = P[np.linalg.norm(P, axis=1) <= radius]
    P = np.vstack([P, np.zeros(n)])
    vals = model(P)
    best = P[np.argmin(vals)].copy()
    m_best = float(vals.min())

    step = 2.0 * radius / samples ** (1.0 / n)
    directions = np.vstack([np.eye(n), -np.eye(n)])
    while step > 1e-13 * max(1.0, radius):
        trial = best + step * directions
        tv = model(trial)
        i = int(np.argmin(tv))
        if tv[i] < m_best:
            best, m_best = trial[i], float(tv[i])
        else:
            step *= 0.5
    return best, m_best
