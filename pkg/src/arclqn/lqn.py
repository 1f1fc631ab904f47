"""Limited-memory SR1 matrices in compact form.

``B = gamma*I + Psi M^-1 Psi^T`` with ``Psi = Y - gamma*S`` and
``M = E - gamma*S^T S``, where ``E`` is ``S^T Y`` symmetrized from its lower
triangle. Only the n x k factors S, Y and the k x k Gram matrices
``S^T S``, ``S^T Y`` and ``Y^T Y`` are stored; Psi is never materialized.
"""
import enum
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularM
from .small_eig import jacobi_eigh

EPS_CURV = 1e-8
KAPPA = 1e-7
GAMMA_MIN, GAMMA_MAX = 1e-3, 1e3
SINGULAR_RTOL = 1e-14
# residuals y - Bs this close to rounding level count as exactly zero
ZERO_RESIDUAL_RTOL = 64 * np.finfo(float).eps


class UpdateReason(enum.Enum):
    ACCEPTED = "accepted"
    CURVATURE_SKIP = "curvature_skip"
    DEGENERATE_SKIP = "degenerate_skip"
    RESET_TRIGGERED = "reset_triggered"


@dataclass(frozen=True)
class UpdateOutcome:
    accepted: bool
    reason: UpdateReason


class LqnState:
    """Limited-memory SR1 approximation ``B`` with incrementally kept Grams.

    Parameters
    ----------
    n : int
        Problem dimension.
    memory : int
        Maximum number of stored (s, y) pairs.
    gamma : float
        Scaling of the seed matrix ``B0 = gamma * I``.
    gamma_policy : {"fixed", "adaptive"}
        With "adaptive", gamma is reset to ``clamp(y'y / s'y)`` after each
        accepted pair with positive curvature.
    """

    def __init__(self, n, memory=5, gamma=1.0, gamma_policy="fixed",
                 eps_curv=EPS_CURV, kappa=KAPPA):
        if memory < 1:
            raise ValueError("memory must be >= 1")
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        if gamma_policy not in ("fixed", "adaptive"):
            raise ValueError(f"unknown gamma policy {gamma_policy!r}")
        self.n = int(n)
        self.memory = int(memory)
        self.gamma = float(gamma)
        self.gamma_policy = gamma_policy
        self.eps_curv = eps_curv
        self.kappa = kappa
        self.S = np.empty((0, self.n))
        self.Y = np.empty((0, self.n))
        self.StS = np.empty((0, 0))
        self.StY = np.empty((0, 0))
        self.YtY = np.empty((0, 0))

    @classmethod
    def from_pairs(cls, S, Y, gamma=1.0, memory=None, **kwargs):
        """Build a state directly from stacked pairs (rows of S and Y).

        No acceptance test is applied and the pairs are stored as given.
        """
        S = np.atleast_2d(np.asarray(S, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if S.shape != Y.shape:
            raise ValueError("S and Y must have the same shape")
        k, n = S.shape
        state = cls(n, memory or max(k, 1), gamma, **kwargs)
        if k > state.memory:
            raise ValueError("more pairs than memory")
        state.S, state.Y = S.copy(), Y.copy()
        state.StS = S @ S.T
        state.StY = S @ Y.T
        state.YtY = Y @ Y.T
        return state

    def copy(self):
        other = LqnState(self.n, self.memory, self.gamma, self.gamma_policy,
                         self.eps_curv, self.kappa)
        for name in ("S", "Y", "StS", "StY", "YtY"):
            setattr(other, name, getattr(self, name).copy())
        return other

    @property
    def k(self):
        return self.S.shape[0]

    def __len__(self):
        return self.k

    def __repr__(self):
        return f"LqnState(n={self.n}, k={self.k}, memory={self.memory}, gamma={self.gamma:g})"

    # -- small matrices derived from the caches -------------------------

    def middle(self):
        """``M = E - gamma * S^T S``."""
        E = np.tril(self.StY) + np.tril(self.StY, -1).T
        return E - self.gamma * self.StS

    def psi_gram(self):
        """``T = Psi^T Psi`` without touching any n-vector."""
        g = self.gamma
        return self.YtY - g * (self.StY + self.StY.T) + g * g * self.StS

    def psi_t(self, v):
        """``Psi^T v`` in O(kn)."""
        return self.Y @ v - self.gamma * (self.S @ v)

    def psi(self, c):
        """``Psi c`` in O(kn)."""
        return self.Y.T @ c - self.gamma * (self.S.T @ c)

    def _solve_middle(self, rhs):
        M = self.middle()
        with warnings.catch_warnings():
            # exact zero pivots are reported below as SingularM
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.min() <= SINGULAR_RTOL * max(np.abs(M).max(), np.finfo(float).tiny):
            raise SingularM(f"middle matrix singular (min pivot {diag.min():.3e})")
        return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)

    # -- operations -----------------------------------------------------

    def bmul(self, v):
        """Matrix-vector product ``B v`` in O(kn + k^3)."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"expected shape ({self.n},), got {v.shape}")
        if self.k == 0:
            return self.gamma * v
        c = self._solve_middle(self.psi_t(v))
        return self.gamma * v + self.psi(c)

    def model_value(self, g, sigma, s, f0=0.0):
        """Cubic model ``f0 + s'g + s'Bs/2 + sigma/3 ||s||^3``."""
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        s = np.asarray(s, dtype=float)
        ns = np.linalg.norm(s)
        return f0 + s @ g + 0.5 * (s @ self.bmul(s)) + sigma / 3.0 * ns ** 3

    def dense(self):
        """Explicit n x n matrix (testing and dense baselines only)."""
        B = self.gamma * np.eye(self.n)
        if self.k:
            Psi = self.Y - self.gamma * self.S
            B += Psi.T @ self._solve_middle(Psi)
        return B

    def try_update(self, s, y, eps_curv=None, kappa=None):
        """Offer the pair (s, y); apply the SR1 update if it is well defined.

        Both vectors are first divided by ``max(||s||, kappa)``. The pair is
        skipped when ``|s'r| <= eps_curv ||s|| ||r||`` with ``r = y - B s``,
        or when ``r`` vanishes up to rounding in ``y`` and ``B s``.
        After an append, the memory is trimmed (oldest and newest pair
        dropped) if ``min eig(S^T S) < kappa``.
        """
        eps_curv = self.eps_curv if eps_curv is None else eps_curv
        kappa = self.kappa if kappa is None else kappa
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        if s.shape != (self.n,) or y.shape != (self.n,):
            raise ValueError(f"pair shapes {s.shape}, {y.shape} do not match n={self.n}")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
            return UpdateOutcome(False, UpdateReason.DEGENERATE_SKIP)
        scale = max(np.linalg.norm(s), kappa)
        s = s / scale
        y = y / scale
        try:
            bs = self.bmul(s)
        except SingularM:
            self.reset_trim()
            return UpdateOutcome(False, UpdateReason.RESET_TRIGGERED)
        r = y - bs
        nr = np.linalg.norm(r)
        sr = s @ r
        if (nr <= ZERO_RESIDUAL_RTOL * (np.linalg.norm(y) + np.linalg.norm(bs))
                or abs(sr) <= eps_curv * np.linalg.norm(s) * nr):
            return UpdateOutcome(False, UpdateReason.CURVATURE_SKIP)

        self._append(s, y)
        if self.gamma_policy == "adaptive":
            sy = s @ y
            if sy > 0:
                self.gamma = float(np.clip((y @ y) / sy, GAMMA_MIN, GAMMA_MAX))
        _, w = jacobi_eigh(self.StS)
        if w[0] < kappa:
            self.reset_trim()
            return UpdateOutcome(False, UpdateReason.RESET_TRIGGERED)
        return UpdateOutcome(True, UpdateReason.ACCEPTED)

    def _append(self, s, y):
        if self.k == self.memory:
            self._drop([0])
        Ss, Sy = self.S @ s, self.S @ y
        Ys, Yy = self.Y @ s, self.Y @ y
        ss, sy, yy = s @ s, s @ y, y @ y
        self.StS = np.block([[self.StS, Ss[:, None]], [Ss[None, :], ss]])
        # StY[i, j] = s_i . y_j
        self.StY = np.block([[self.StY, Sy[:, None]], [Ys[None, :], sy]])
        self.YtY = np.block([[self.YtY, Yy[:, None]], [Yy[None, :], yy]])
        self.S = np.vstack((self.S, s))
        self.Y = np.vstack((self.Y, y))

    def _drop(self, idx):
        keep = np.setdiff1d(np.arange(self.k), idx)
        self.S = self.S[keep]
        self.Y = self.Y[keep]
        self.StS = self.StS[np.ix_(keep, keep)]
        self.StY = self.StY[np.ix_(keep, keep)]
        self.YtY = self.YtY[np.ix_(keep, keep)]

    def reset_trim(self):
        """Drop the oldest and newest pair (the only pair when k == 1)."""
        if self.k == 0:
            return self
        self._drop([0, self.k - 1])
        return self

    def clear(self):
        self._drop(np.arange(self.k))
        return self
