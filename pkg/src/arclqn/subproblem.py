"""Exact global minimization of the cubic model for limited-memory SR1 matrices.

For ``B = gamma*I + Psi M^-1 Psi^T`` the spectrum is available implicitly
from a k x k generalized eigenproblem ``M v = mu T v`` with ``T = Psi^T Psi``:
the columns of ``Psi V`` are eigenvectors with eigenvalues ``gamma + 1/mu``
and the orthogonal complement is an (n-k)-fold cluster at ``gamma``. Once
``Psi^T g`` has been formed, ``||s(lam)||`` and ``||w(lam)||`` cost O(k) per
evaluation, so the secular Newton iteration never touches an n-vector.
Only the final step recovery is O(kn).
"""
import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateProbe, DomainError, MaxIterations
from .lqn import LqnState
from .small_eig import generalized_eigh

# Eigenvalues within this relative distance of lambda_1 are treated as one
# eigenspace; shifted denominators below it count as vanishing.
CLUSTER_RTOL = 1e-10
MAX_NEWTON = 200
PROBE_SEED = 20240613


class Case(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY_SADDLE = "boundary_saddle"
    HARD_CASE = "hard_case"


class Mode(enum.Enum):
    NORM_TRICK = "normtrick"
    NAIVE_LQN = "naive"


@dataclass(frozen=True)
class ToleranceSet:
    """Stopping and classification tolerances for the subproblem solver.

    ``nu`` is the secular stopping tolerance, ``eps_shift`` the offset of the
    initial shift above ``max(0, -lambda_1)``, and ``hard_rtol`` the relative
    size (w.r.t. ``||g||``) below which the gradient's component on the
    leftmost eigenspace is considered zero.
    """

    nu: float = 1e-7
    eps_shift: float = 1e-4
    hard_rtol: float = 1e-10
    max_iters: int = MAX_NEWTON


@dataclass(frozen=True)
class ImplicitSpectrum:
    gamma: float
    lam_hat: np.ndarray
    V: np.ndarray
    g2: np.ndarray
    g1_sq: float
    lambda1: float
    ubar: np.ndarray
    n: int
    gtg: float
    raw_g1_sq: float = 0.0

    @property
    def k(self):
        return self.lam_hat.shape[0]

    @property
    def cluster_dim(self):
        """Multiplicity of the eigenvalue gamma."""
        return self.n - self.k

    def eigenvalues(self):
        """Full spectrum of B as an ascending array (length n)."""
        return np.sort(np.concatenate([self.lam_hat, np.full(self.cluster_dim, self.gamma)]))


@dataclass
class SubproblemSolution:
    s_star: np.ndarray
    lambda_star: float
    case: Case
    newton_iters: int
    model_decrease: float
    spectrum: Optional[ImplicitSpectrum] = field(default=None, repr=False)


def implicit_spectrum(state: LqnState, g) -> ImplicitSpectrum:
    """Implicit eigendecomposition of ``B`` together with ``U^T g``.

    Raises NotPositiveDefinite if ``Psi^T Psi`` is rank deficient; callers are
    expected to trim the memory and retry or skip the step.
    """
    g = np.asarray(g, dtype=float)
    gtg = float(g @ g)
    gamma = state.gamma
    if state.k == 0:
        empty = np.empty(0)
        return ImplicitSpectrum(gamma, empty, np.empty((0, 0)), empty, gtg,
                                gamma, empty, state.n, gtg, gtg)
    ge = generalized_eigh(state.middle(), state.psi_gram())
    mu = ge.lambdas
    # a zero generalized eigenvalue is a singular direction of M; B is gamma there
    keep = np.abs(mu) > 1e-13 * np.max(np.abs(mu)) if np.any(mu) else np.zeros(mu.shape, bool)
    V = ge.V[:, keep]
    lam_hat = gamma + 1.0 / mu[keep]
    order = np.argsort(lam_hat, kind="stable")
    lam_hat, V = lam_hat[order], V[:, order]
    ubar = state.psi_t(g)
    g2 = V.T @ ubar
    raw = gtg - float(g2 @ g2)
    lambda1 = gamma if state.n > lam_hat.size else np.inf
    if lam_hat.size:
        lambda1 = min(lambda1, float(lam_hat[0]))
    return ImplicitSpectrum(gamma, lam_hat, V, g2, max(raw, 0.0), lambda1,
                            ubar, state.n, gtg, raw)


def _terms(spec, lam):
    """Coefficients ``|U_i^T g|`` and shifted eigenvalues of each block."""
    coef = np.empty(spec.k + 1)
    den = np.empty(spec.k + 1)
    coef[0] = np.sqrt(spec.g1_sq) if spec.cluster_dim > 0 else 0.0
    den[0] = spec.gamma + lam
    coef[1:] = np.abs(spec.g2)
    den[1:] = spec.lam_hat + lam
    return coef, den


def _live_terms(spec, lam, drop_tol):
    coef, den = _terms(spec, lam)
    if drop_tol is None:
        dead = den <= 0.0
        if np.any(dead & (coef != 0.0)):
            raise DomainError(f"lam={lam!r} is not above -lambda_1={-spec.lambda1!r}")
    else:
        dead = den <= CLUSTER_RTOL * max(1.0, abs(lam))
        if np.any(dead & (coef > drop_tol)):
            raise DomainError(f"nonzero component on the eigenspace annihilated at lam={lam!r}")
    return coef[~dead], den[~dead]


def norms_at(spec: ImplicitSpectrum, lam, drop_tol=None):
    """``(||s(lam)||^2, ||w(lam)||^2)`` from the implicit spectrum in O(k).

    ``s(lam) = -(B + lam I)^+ g`` and ``||w||^2 = s^T (B + lam I)^+ s``.
    With ``drop_tol=None`` only exactly-zero coefficients may sit on a
    nonpositive denominator. Passing ``drop_tol`` switches to the
    pseudo-inverse convention used at ``lam = -lambda_1``: terms whose
    denominator vanishes are dropped if their coefficient is at most
    ``drop_tol``.
    """
    coef, den = _live_terms(spec, lam, drop_tol)
    c2 = coef * coef
    d2 = den * den
    return float(np.sum(c2 / d2)), float(np.sum(c2 / (d2 * den)))


def phi1(spec: ImplicitSpectrum, lam, sigma):
    """Secular function ``1/||s(lam)|| - sigma/lam``."""
    s2, _ = norms_at(spec, lam)
    if s2 == 0.0:
        return np.inf
    return 1.0 / np.sqrt(s2) - sigma / lam


def newton_correction(s_norm, w_norm_sq, lam, sigma):
    """Newton step on ``phi1`` expressed through ``||s||`` and ``||w||^2``."""
    r = lam / sigma
    return lam * (s_norm - r) / (s_norm + r * (lam * w_norm_sq / s_norm ** 2))


def newton_step(spec: ImplicitSpectrum, lam, sigma):
    s2, w2 = norms_at(spec, lam)
    return newton_correction(np.sqrt(s2), w2, lam, sigma)


def _converged(s_norm, lam, sigma, nu):
    # absolute gap; implies the relative form nu * max(1, lam/sigma)
    return abs(s_norm - lam / sigma) < nu


def solve_lambda(spec: ImplicitSpectrum, sigma, nu, lambda_init, max_iters=MAX_NEWTON):
    """Newton iteration on the secular equation using only O(k) norm updates.

    Returns ``(lambda_star, iterations)``. Started from a point where
    ``||s(lam)|| > lam/sigma`` the iterates increase monotonically.
    """
    return _newton(lambda lam: norms_at(spec, lam), sigma, nu, lambda_init,
                   max(0.0, -spec.lambda1), max_iters)


def _newton(norms, sigma, nu, lam, lower, max_iters):
    for it in range(max_iters + 1):
        s2, w2 = norms(lam)
        sn = np.sqrt(s2)
        if _converged(sn, lam, sigma, nu):
            return lam, it
        if it == max_iters:
            break
        new = lam + newton_correction(sn, w2, lam, sigma)
        if not np.isfinite(new):
            raise DomainError(f"Newton iterate became non-finite from lam={lam!r}")
        if new <= lower:
            # only reachable when started right of the root
            new = 0.5 * (lam + lower)
        lam = new
    raise MaxIterations(f"secular Newton did not converge in {max_iters} iterations")


def recover_step(state: LqnState, spec: ImplicitSpectrum, g, lam, drop_tol=None):
    """Full-space ``s = -(B + lam I)^+ g`` in O(kn + k^2).

    ``s = -g/(lam+gamma) - Psi V r`` with
    ``r = [(Lambda_hat + lam I)^-1 - (lam+gamma)^-1 I] V^T Psi^T g``.
    """
    g = np.asarray(g, dtype=float)
    coef, den = _terms(spec, lam)
    if drop_tol is None:
        dead = den <= 0.0
        tol = 0.0
    else:
        dead = den <= CLUSTER_RTOL * max(1.0, abs(lam))
        tol = drop_tol
    if np.any(dead & (coef > tol)):
        raise DomainError(f"cannot recover step at lam={lam!r}")
    with np.errstate(divide="ignore"):
        inv = np.where(dead, 0.0, 1.0 / np.where(dead, 1.0, den))
    if spec.k == 0:
        return -inv[0] * g
    z = spec.g2  # V^T ubar
    if dead[0]:
        # gamma cluster annihilated: keep only the Psi V block
        return -state.psi(spec.V @ (inv[1:] * z))
    r = (inv[1:] - inv[0]) * z
    return -inv[0] * g - state.psi(spec.V @ r)


def leftmost_eigvec(state: LqnState, spec: ImplicitSpectrum, probe=None, g=None):
    """Unit eigenvector of B for its smallest eigenvalue.

    If the gamma cluster is leftmost, a probe vector is projected onto the
    complement of ``span(Psi V)``; probes are tried in the order: the given
    probe (or e_1), a fixed seeded Gaussian vector, then ``g``.
    """
    n = state.n
    if spec.k == 0 or (spec.cluster_dim > 0 and spec.gamma < spec.lam_hat[0]):
        probes = []
        if probe is not None:
            probes.append(np.asarray(probe, dtype=float))
        e1 = np.zeros(n)
        e1[0] = 1.0
        probes.append(e1)
        probes.append(np.random.default_rng(PROBE_SEED).standard_normal(n))
        if g is not None:
            probes.append(np.asarray(g, dtype=float))
        for p in probes:
            pn = np.linalg.norm(p)
            if pn == 0.0:
                continue
            r = p - state.psi(spec.V @ (spec.V.T @ state.psi_t(p))) if spec.k else p
            rn = np.linalg.norm(r)
            if rn > 1e-10 * pn:
                return r / rn
        raise DegenerateProbe("all probes lie in span(Psi V)")
    u = state.psi(spec.V[:, 0])
    return u / np.linalg.norm(u)


def hard_case_alpha(s_norm, lambda1, sigma):
    """Length of the eigenvector correction so that ``||s + a u1|| = -lambda1/sigma``."""
    radius = -lambda1 / sigma
    if not (lambda1 < 0 and s_norm < radius):
        raise DomainError(f"no hard-case correction: ||s||={s_norm!r}, radius={radius!r}")
    return float(np.sqrt((radius - s_norm) * (radius + s_norm)))


def _model_decrease(g, s, lam, sigma):
    # uses (B + lam I) s = -g, so s'Bs = -s'g - lam ||s||^2
    gs = float(g @ s)
    ss = float(s @ s)
    return -(0.5 * gs - 0.5 * lam * ss + sigma / 3.0 * ss ** 1.5)


class _ShiftedSolver:
    """Sherman-Morrison-Woodbury solves with ``B + lam I`` (O(kn) each)."""

    def __init__(self, state: LqnState):
        self.state = state
        self.Psi = state.Y - state.gamma * state.S
        self.M = state.middle()
        self.T = state.psi_gram()

    def solve(self, lam, v):
        c = self.state.gamma + lam
        if self.Psi.shape[0] == 0:
            return v / c
        inner = c * self.M + self.T
        z = np.linalg.solve(inner, self.Psi @ v)
        return (v - self.Psi.T @ z) / c


def _naive_norms(solver, g):
    last = {}

    def norms(lam):
        s = -solver.solve(lam, g)
        z = solver.solve(lam, s)
        last["lam"], last["s"] = lam, s
        return float(s @ s), float(s @ z)

    return norms, last


def solve_subproblem(state: LqnState, g, sigma, tol: ToleranceSet = ToleranceSet(),
                     mode=Mode.NORM_TRICK, spectrum: Optional[ImplicitSpectrum] = None):
    """Global minimizer of ``s'g + s'Bs/2 + sigma/3 ||s||^3``.

    Raises SolverError subclasses (MaxIterations, NotPositiveDefinite,
    SingularM, DegenerateProbe, DomainError) when no step can be produced.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    mode = Mode(mode)
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient is not finite")
    spec = implicit_spectrum(state, g) if spectrum is None else spectrum
    lam1 = spec.lambda1
    lower = max(0.0, -lam1)
    gnorm = np.sqrt(spec.gtg)

    def finish(s, lam, case, iters):
        return SubproblemSolution(s, float(lam), case, iters,
                                  _model_decrease(g, s, lam, sigma), spec)

    if gnorm == 0.0:
        if lam1 >= 0:
            return finish(np.zeros(state.n), 0.0, Case.INTERIOR, 0)
        u1 = leftmost_eigvec(state, spec)
        return finish(-lam1 / sigma * u1, -lam1, Case.HARD_CASE, 0)

    drop_tol = tol.hard_rtol * gnorm
    if lam1 < 0:
        coef, den = _terms(spec, -lam1)
        on_left = den <= CLUSTER_RTOL * max(1.0, abs(lam1))
        if np.sqrt(np.sum(coef[on_left] ** 2)) <= drop_tol:
            s2, _ = norms_at(spec, -lam1, drop_tol=drop_tol)
            s_norm = np.sqrt(s2)
            radius = -lam1 / sigma
            band = tol.nu
            if s_norm < radius - band:
                s = recover_step(state, spec, g, -lam1, drop_tol)
                u1 = leftmost_eigvec(state, spec, g=g)
                # re-measure so the correction uses the materialized norm
                s_norm = min(np.linalg.norm(s), radius)
                alpha = hard_case_alpha(s_norm, lam1, sigma) if s_norm < radius else 0.0
                return finish(s + alpha * u1, -lam1, Case.HARD_CASE, 0)
            if s_norm <= radius + band:
                s = recover_step(state, spec, g, -lam1, drop_tol)
                return finish(s, -lam1, Case.BOUNDARY_SADDLE, 0)

    if mode is Mode.NORM_TRICK:
        norms = lambda lam: norms_at(spec, lam)
        last = None
    else:
        norms, last = _naive_norms(_ShiftedSolver(state), g)

    # start strictly left of the root: ||s(lam)|| > lam/sigma
    lam = lower + tol.eps_shift
    for _ in range(64):
        s2, _ = norms(lam)
        if np.sqrt(s2) >= lam / sigma:
            break
        nxt = lower + 0.1 * (lam - lower)
        if not nxt > lower:
            break
        lam = nxt
    lam, iters = _newton(norms, sigma, tol.nu, lam, lower, tol.max_iters)

    if mode is Mode.NORM_TRICK:
        s = recover_step(state, spec, g, lam)
    else:
        if last.get("lam") != lam:
            norms(lam)
        s = last["s"]
    return finish(s, lam, Case.INTERIOR, iters)


def cauchy_point(state: LqnState, g, sigma, f0=0.0):
    """Minimizer of the cubic model along ``-g``.

    The step length is the positive root of
    ``sigma ||g||^3 u^2 + (g'Bg) u - ||g||^2 = 0``.
    """
    g = np.asarray(g, dtype=float)
    g2 = float(g @ g)
    gn = np.sqrt(g2)
    if gn == 0.0:
        raise ValueError("Cauchy point undefined for g = 0")
    a = sigma * gn ** 3
    b = float(g @ state.bmul(g))
    disc = np.sqrt(b * b + 4.0 * a * g2)
    if b >= 0:
        u = 2.0 * g2 / (b + disc)
    else:
        u = (disc - b) / (2.0 * a)
    s = -u * g
    return s, state.model_value(g, sigma, s, f0)


__all__ = [
    "Case", "Mode", "ToleranceSet", "ImplicitSpectrum", "SubproblemSolution",
    "implicit_spectrum", "norms_at", "phi1", "newton_correction", "newton_step",
    "solve_lambda", "recover_step", "leftmost_eigvec", "hard_case_alpha",
    "solve_subproblem", "cauchy_point",
]
