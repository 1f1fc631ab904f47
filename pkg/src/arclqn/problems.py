"""Objective functions and generators of cubic-subproblem test instances.

All randomness comes from ``numpy.random.default_rng`` (PCG64) seeded with
explicit integers, so every object here is reproducible bit-for-bit.
"""
import enum
from dataclasses import dataclass

import numpy as np

from .lqn import LqnState
from .subproblem import implicit_spectrum, leftmost_eigvec, norms_at


class Problem:
    """Finite-sum objective ``f(x) = mean_i f_i(x)``.

    Subclasses implement ``_eval(x, idx)`` returning ``(f, grad)`` averaged
    over the rows in ``idx`` (``None`` meaning the full dataset).
    """

    name = "problem"

    def __init__(self, dim, size=1):
        self.dim = int(dim)
        self.size = int(size)

    def eval(self, x, batch=None):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected x of shape ({self.dim},), got {x.shape}")
        return self._eval(x, batch)

    def __call__(self, x, batch=None):
        return self.eval(x, batch)[0]

    def default_x0(self):
        return np.zeros(self.dim)

    def _eval(self, x, batch):
        raise NotImplementedError


class Rosenbrock(Problem):
    """Chained Rosenbrock ``sum 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2``."""

    name = "rosenbrock"

    def __init__(self, n):
        if n < 2:
            raise ValueError("Rosenbrock needs n >= 2")
        super().__init__(n)

    def default_x0(self):
        x0 = np.ones(self.dim)
        x0[0::2] = -1.2
        return x0

    def _eval(self, x, batch):
        a = x[1:] - x[:-1] ** 2
        b = 1.0 - x[:-1]
        f = float(np.sum(100.0 * a * a + b * b))
        g = np.zeros_like(x)
        g[:-1] = -400.0 * x[:-1] * a - 2.0 * b
        g[1:] += 200.0 * a
        return f, g


class Quadratic(Problem):
    """Convex ``x' D x / 2`` with a log-spaced diagonal of given condition."""

    name = "quadratic"

    def __init__(self, n, condition=1.0):
        if condition < 1:
            raise ValueError("condition number must be >= 1")
        super().__init__(n)
        self.diag = np.logspace(0.0, np.log10(condition), n) if n > 1 else np.ones(1)

    def default_x0(self):
        return np.ones(self.dim)

    def _eval(self, x, batch):
        dx = self.diag * x
        return 0.5 * float(x @ dx), dx


class LogisticSynth(Problem):
    """Binary logistic regression on synthetic data with label noise.

    Features are standard normal scaled by ``1/sqrt(d)``; labels follow the
    sign of a hidden linear model and are flipped with probability ``flip``.
    A small ridge term keeps the minimizer well defined.
    """

    name = "logistic"

    def __init__(self, n_features, N, seed=0, flip=0.1, ridge=1e-4):
        super().__init__(n_features, N)
        rng = np.random.default_rng(seed)
        self.X = rng.standard_normal((N, n_features)) / np.sqrt(n_features)
        w_true = rng.standard_normal(n_features)
        labels = np.sign(self.X @ w_true)
        labels[labels == 0] = 1.0
        flips = rng.random(N) < flip
        labels[flips] *= -1.0
        self.labels = labels
        self.ridge = ridge

    def _eval(self, x, batch):
        X = self.X if batch is None else self.X[batch]
        yl = self.labels if batch is None else self.labels[batch]
        z = -yl * (X @ x)
        loss = np.logaddexp(0.0, z)
        # d/dz log(1 + e^z) = sigmoid(z)
        sig = np.exp(z - loss)
        f = float(np.mean(loss)) + 0.5 * self.ridge * float(x @ x)
        g = X.T @ (-yl * sig) / X.shape[0] + self.ridge * x
        return f, g


def make_problem(name, **kwargs):
    if name == "rosenbrock":
        return Rosenbrock(kwargs.get("n", 2))
    if name == "quadratic":
        return Quadratic(kwargs.get("n", 2), kwargs.get("condition", 1.0))
    if name == "logistic":
        return LogisticSynth(kwargs.get("n_features", 200), kwargs.get("N", 5000),
                             seed=kwargs.get("seed", 0))
    raise ValueError(f"unknown problem {name!r}")


# -- cubic subproblem instances ------------------------------------------

class Kind(enum.Enum):
    HARD = "hard"
    INDEFINITE = "indefinite"
    POSITIVE_DEFINITE = "pd"


# hidden-Hessian spectra and seed scalings per kind
_SPECTRUM = {
    Kind.POSITIVE_DEFINITE: ((0.5, 10.0), 1.0),
    Kind.INDEFINITE: ((-5.0, 10.0), 5.0),
    Kind.HARD: ((-5.0, 10.0), 5.0),
}
HARD_MARGIN = 0.5
MAX_ATTEMPTS = 10
# reject SR1 blow-ups: implicit eigenvalues far outside the hidden spectrum
# come from a nearly singular M and make the instance ill-conditioned
SPREAD_LIMIT = 10.0


@dataclass
class SubproblemCase:
    kind: Kind
    state: LqnState
    g: np.ndarray
    sigma: float
    seed: int


class CaseGenerationError(RuntimeError):
    pass


def _build(kind, n, m, sigma, rng):
    (lo, hi), gamma = _SPECTRUM[kind]
    h = rng.uniform(lo, hi, n)
    state = LqnState(n, m, gamma)
    for _ in range(m):
        s = rng.standard_normal(n)
        s /= np.linalg.norm(s)
        state.try_update(s, h * s)
    if state.k < m:
        return None
    g = rng.standard_normal(n)
    spec = implicit_spectrum(state, g)
    if spec.k and np.max(np.abs(spec.lam_hat)) > SPREAD_LIMIT * max(abs(lo), abs(hi)):
        return None
    lam1 = spec.lambda1
    if kind is Kind.POSITIVE_DEFINITE:
        return (state, g) if lam1 > 0 else None
    if not lam1 < 0:
        return None
    # keep the leftmost eigenvalue simple so the eigenspace is one vector
    if spec.k > 1 and spec.lam_hat[1] - lam1 <= 1e-6 * max(1.0, abs(lam1)):
        return None
    u1 = leftmost_eigvec(state, spec)
    gn = np.linalg.norm(g)
    if kind is Kind.INDEFINITE:
        return (state, g) if abs(u1 @ g) > 1e-8 * gn else None
    g = g - (u1 @ g) * u1
    spec = implicit_spectrum(state, g)
    s2, _ = norms_at(spec, -lam1, drop_tol=1e-10 * np.linalg.norm(g))
    if s2 == 0.0:
        return None
    g = g * (HARD_MARGIN * (-lam1 / sigma) / np.sqrt(s2))
    if abs(u1 @ g) > 1e-12 * np.linalg.norm(g):
        return None
    return state, g


def make_subproblem_case(kind, n, m, seed, sigma=1.0):
    """Random LSR1 cubic subproblem of the requested kind.

    Pairs are ``(s, H s)`` for unit-sphere ``s`` and a hidden diagonal ``H``.
    Hard cases start from an indefinite instance, remove the gradient's
    component along the leftmost eigenvector, and rescale ``g`` so that the
    pseudo-inverse step has length ``0.5 * (-lambda_1) / sigma``.
    """
    kind = Kind(kind)
    if not 1 <= m <= 20:
        raise ValueError("m must be in [1, 20]")
    if n < m + 1:
        raise ValueError("need n >= m + 1")
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt])
        built = _build(kind, n, m, sigma, rng)
        if built is not None:
            state, g = built
            return SubproblemCase(kind, state, g, sigma, seed)
    raise CaseGenerationError(f"could not generate a {kind.value} case (n={n}, m={m}, seed={seed})")
