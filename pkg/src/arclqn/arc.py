"""Adaptive regularization with cubics driven by a limited-memory SR1 model.

Each iteration solves the cubic subproblem exactly, measures the success
ratio on the same minibatch, and either takes the cubic step or falls back
to a first-order (SGD or Adam) displacement. The (s, y) pair is offered to
the quasi-Newton memory on both branches.
"""
import csv
import dataclasses
import enum
import io
import json
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import (DegenerateModel, NonFiniteObjective, NotPositiveDefinite,
                     SingularM, SolverError)
from .lqn import LqnState
from .subproblem import ToleranceSet, implicit_spectrum, solve_subproblem


class Branch(enum.Enum):
    ACCEPTED = "accepted"
    FALLBACK = "fallback"
    FAILED = "failed"


@dataclass
class ArcConfig:
    """Outer-loop hyperparameters.

    ``gamma1``/``gamma2`` bound the growth of sigma after a rejected step
    (the new value is ``gamma1 * sigma``); ``sigma_shrink`` is the factor
    applied after a very successful step. ``gamma`` and ``gamma_policy``
    configure the seed matrix of the quasi-Newton memory.
    """

    eta1: float = 0.1
    eta2: float = 0.7
    sigma0: float = 1.0
    sigma_floor: float = 1e-8
    sigma_cap: float = 8096.0
    sigma_shrink: float = 0.5
    gamma1: float = 2.0
    gamma2: float = 2.0
    alpha1: float = 1.0
    alpha2: float = 1e-3
    fallback: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-4
    mu: float = 1e-3
    nu: float = 1e-5
    eps_shift: float = 1e-4
    hard_rtol: float = 1e-10
    eps_curv: float = 1e-8
    kappa: float = 1e-7
    memory: int = 5
    gamma: float = 1.0
    gamma_policy: str = "fixed"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.eta1 <= self.eta2:
            raise ValueError("need 0 < eta1 <= eta2")
        if not 0 < self.sigma_floor <= self.sigma0 <= self.sigma_cap:
            raise ValueError("need 0 < sigma_floor <= sigma0 <= sigma_cap")
        if not 0 < self.sigma_shrink <= 1:
            raise ValueError("sigma_shrink must lie in (0, 1]")
        if not 1 <= self.gamma1 <= self.gamma2:
            raise ValueError("need 1 <= gamma1 <= gamma2")
        if self.fallback not in ("sgd", "adam"):
            raise ValueError(f"unknown fallback {self.fallback!r}")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise ValueError("learning rates must be positive")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        for name in ("nu", "eps_shift", "eps_curv", "kappa", "gamma", "eps_adam"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.gamma_policy not in ("fixed", "adaptive"):
            raise ValueError(f"unknown gamma policy {self.gamma_policy!r}")

    @classmethod
    def deterministic(cls, **overrides):
        """Preset for full-batch runs: plain gradient fallback, no decrease floor.

        The minimum-decrease guard and the Adam fallback target noisy
        minibatch training; on a deterministic objective they stall the
        final approach to a stationary point.
        """
        kw = {"fallback": "sgd", "mu": 0.0}
        kw.update(overrides)
        return cls(**kw)

    def tolerances(self):
        return ToleranceSet(nu=self.nu, eps_shift=self.eps_shift, hard_rtol=self.hard_rtol)

    def new_state(self, n):
        return LqnState(n, self.memory, self.gamma, self.gamma_policy,
                        self.eps_curv, self.kappa)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("config JSON must be an object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def rho(f0, f1, m_star):
    """Actual over predicted decrease."""
    pred = f0 - m_star
    if not pred > 1e-15 * (1.0 + abs(f0)):
        raise DegenerateModel(f"predicted decrease {pred!r} too small")
    return (f0 - f1) / pred


def sigma_update(sigma, rho_k, cfg: ArcConfig):
    if rho_k >= cfg.eta2:
        return max(sigma * cfg.sigma_shrink, cfg.sigma_floor)
    if rho_k >= cfg.eta1:
        return sigma
    return min(cfg.gamma1 * sigma, cfg.sigma_cap)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(adam: AdamState, g, alpha2, beta1=0.9, beta2=0.999, eps=1e-4):
    """Bias-corrected Adam displacement; updates ``adam`` in place."""
    g = np.asarray(g, dtype=float)
    adam.t += 1
    adam.m = beta1 * adam.m + (1.0 - beta1) * g
    adam.v = beta2 * adam.v + (1.0 - beta2) * g * g
    m_hat = adam.m / (1.0 - beta1 ** adam.t)
    v_hat = adam.v / (1.0 - beta2 ** adam.t)
    return -alpha2 * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class StepReport:
    iteration: int
    branch: Branch
    rho: float
    sigma_after: float
    f_before: float
    f_after: float
    grad_norm: float
    newton_iters: int
    case: str
    wall_time_ns: int = 0
    pair: str = ""


def _eval(problem, x, batch):
    f, g = problem.eval(x, batch)
    return float(f), np.asarray(g, dtype=float)


def step(x, state: LqnState, sigma, cfg: ArcConfig, problem, batch=None,
         adam: Optional[AdamState] = None, iteration=0, evaluated=None):
    """One outer iteration. Mutates ``state`` (and ``adam``) in place.

    ``evaluated`` may carry a precomputed ``(f, g)`` at ``x`` on ``batch``.

    Returns:
        (x_new, state, sigma_new, report)
    """
    t0 = time.perf_counter_ns()
    f0, g = evaluated if evaluated is not None else _eval(problem, x, batch)
    if not (np.isfinite(f0) and np.all(np.isfinite(g))):
        raise NonFiniteObjective(f"objective not finite at iteration {iteration}")
    gnorm = float(np.linalg.norm(g))

    rho_k = float("nan")
    newton_iters = 0
    case = ""
    branch = Branch.FAILED
    try:
        spec = implicit_spectrum(state, g)
        sol = solve_subproblem(state, g, sigma, cfg.tolerances(), spectrum=spec)
        newton_iters, case = sol.newton_iters, sol.case.value
        s = cfg.alpha1 * sol.s_star
        m_star = state.model_value(g, sigma, s, f0)
        trial = x + s
        f1, g1 = _eval(problem, trial, batch)
        if np.isfinite(f1) and np.all(np.isfinite(g1)):
            rho_k = float(rho(f0, f1, m_star))
            branch = Branch.FALLBACK
            if rho_k >= cfg.eta1 and f0 - f1 > cfg.mu:
                branch = Branch.ACCEPTED
        else:
            rho_k = float("-inf")
            branch = Branch.FALLBACK
    except (NotPositiveDefinite, SingularM):
        # rank-deficient memory: trim it and take the first-order step
        state.reset_trim()
    except SolverError:
        pass

    if branch is Branch.ACCEPTED:
        if rho_k >= cfg.eta2:
            sigma = max(sigma * cfg.sigma_shrink, cfg.sigma_floor)
        x_new, f_after, g_after = trial, f1, g1
    else:
        sigma = min(cfg.gamma1 * sigma, cfg.sigma_cap)
        if cfg.fallback == "sgd":
            s = -cfg.alpha2 * g
        else:
            if adam is None:
                raise ValueError("Adam fallback needs an AdamState")
            s = adam_step(adam, g, cfg.alpha2, cfg.beta1, cfg.beta2, cfg.eps_adam)
        x_new = x + s
        f_after, g_after = _eval(problem, x_new, batch)

    pair = ""
    if np.isfinite(f_after) and np.all(np.isfinite(g_after)):
        pair = state.try_update(s, g_after - g).reason.value
    report = StepReport(iteration, branch, rho_k, float(sigma), f0, float(f_after), gnorm,
                        newton_iters, case, time.perf_counter_ns() - t0, pair)
    return x_new, state, sigma, report


@dataclass
class Budget:
    max_iters: Optional[int] = None
    max_seconds: Optional[float] = None
    max_epochs: Optional[float] = None
    gtol: Optional[float] = None
    gtol_norm: str = "inf"

    def __post_init__(self):
        if self.gtol_norm not in ("inf", "2"):
            raise ValueError("gtol_norm must be 'inf' or '2'")
        if self.max_iters is None and self.max_seconds is None and self.max_epochs is None:
            raise ValueError("budget needs at least one of max_iters, max_seconds, max_epochs")


@dataclass
class FullEval:
    iteration: int
    f: float
    grad_norm: float
    grad_norm_inf: float


@dataclass
class Trace:
    reports: List[StepReport] = field(default_factory=list)
    full_evals: List[FullEval] = field(default_factory=list)
    x: Optional[np.ndarray] = None
    sigma: float = float("nan")
    stop_reason: str = ""
    wall_seconds: float = 0.0

    @property
    def accepted(self):
        return sum(r.branch is Branch.ACCEPTED for r in self.reports)

    @property
    def fallbacks(self):
        return len(self.reports) - self.accepted

    CSV_COLUMNS = ("iter", "branch", "rho", "sigma", "f_batch", "f_full_or_blank",
                   "grad_norm", "newton_iters", "case", "wall_time_ns")

    def to_csv(self, timing=False):
        """CSV text of the per-step reports.

        ``f_batch`` is the minibatch value before the step and
        ``f_full_or_blank`` the full objective after it, when evaluated.
        Wall times are left blank unless ``timing`` so that two runs with the
        same seed produce byte-identical files.
        """
        full = {e.iteration: e.f for e in self.full_evals}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        num = lambda v: repr(float(v))
        for r in self.reports:
            w.writerow([r.iteration, r.branch.value, num(r.rho), num(r.sigma_after),
                        num(r.f_before), num(full[r.iteration]) if r.iteration in full else "",
                        num(r.grad_norm), r.newton_iters, r.case,
                        r.wall_time_ns if timing else ""])
        return buf.getvalue()

    def summary(self):
        last = self.full_evals[-1] if self.full_evals else None
        return {
            "iterations": len(self.reports),
            "accepted": self.accepted,
            "fallbacks": self.fallbacks,
            "final_f": last.f if last else None,
            "grad_norm": last.grad_norm if last else None,
            "grad_norm_inf": last.grad_norm_inf if last else None,
            "min_grad_norm": min(e.grad_norm for e in self.full_evals) if last else None,
            "final_sigma": self.sigma,
            "stop_reason": self.stop_reason,
            "wall_seconds": self.wall_seconds,
        }


def _batches(size, batch_size, rng):
    """Endless stream of (epoch, index array); reshuffled every epoch."""
    epoch = 0
    while True:
        perm = rng.permutation(size)
        for start in range(0, size, batch_size):
            yield epoch, perm[start:start + batch_size]
        epoch += 1


def run(x0, cfg: ArcConfig, problem, budget: Budget, seed=0, batch_size=None,
        eval_every=None):
    """Run the outer loop until the budget is exhausted.

    Minibatches are drawn without replacement from a permutation reshuffled
    every epoch by ``numpy.random.default_rng(seed)``. With ``batch_size``
    None (or at least the dataset size) every step uses the full objective.
    The full objective is evaluated every ``eval_every`` steps (default: once
    per epoch) and at the end; ``budget.gtol`` is checked on those
    evaluations against the full gradient in the norm ``budget.gtol_norm``.
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    n = x.shape[0]
    trace = Trace(x=x.copy(), sigma=cfg.sigma0)
    full_batch = batch_size is None or batch_size >= problem.size
    steps_per_epoch = 1 if full_batch else -(-problem.size // batch_size)
    if eval_every is None:
        eval_every = steps_per_epoch
    max_iters = budget.max_iters
    if budget.max_epochs is not None:
        by_epochs = int(np.ceil(budget.max_epochs * steps_per_epoch))
        max_iters = by_epochs if max_iters is None else min(max_iters, by_epochs)
    if max_iters is not None and max_iters <= 0:
        trace.stop_reason = "budget"
        return trace

    rng = np.random.default_rng(seed)
    stream = None if full_batch else _batches(problem.size, batch_size, rng)
    state = cfg.new_state(n)
    adam = AdamState.zeros(n)
    sigma = cfg.sigma0

    def full_eval(k):
        f, g = _eval(problem, x, None)
        e = FullEval(k, f, float(np.linalg.norm(g)), float(np.max(np.abs(g))))
        trace.full_evals.append(e)
        return e, f, g

    k = 0
    cached = None
    reason = "budget"
    while max_iters is None or k < max_iters:
        if budget.max_seconds is not None and time.perf_counter() - start >= budget.max_seconds:
            reason = "time"
            break
        batch = None if full_batch else next(stream)[1]
        try:
            x, state, sigma, report = step(x, state, sigma, cfg, problem, batch, adam,
                                           iteration=k, evaluated=cached)
        except NonFiniteObjective as exc:
            reason = f"non-finite: {exc}"
            break
        cached = None
        trace.reports.append(report)
        k += 1
        if k % eval_every == 0 or k == max_iters:
            e, f, g = full_eval(k - 1)
            if full_batch:
                cached = (f, g)
            gn = e.grad_norm_inf if budget.gtol_norm == "inf" else e.grad_norm
            if budget.gtol is not None and gn <= budget.gtol:
                reason = "gtol"
                break
            if not np.isfinite(f):
                reason = "non-finite: full objective"
                break
    if trace.reports and (not trace.full_evals or trace.full_evals[-1].iteration != k - 1):
        full_eval(k - 1)
    trace.x = x
    trace.sigma = sigma
    trace.stop_reason = reason
    trace.wall_seconds = time.perf_counter() - start
    return trace
