"""Randomized oracle and property batteries.

Each battery returns a :class:`CheckResult`; ``run_checks`` runs a selection
of them. The same functions back the ``verify`` subcommand and the
acceptance tests.
"""
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .dense import brute_force_min, dense_model, dense_solve_subproblem, dense_sr1_update
from .lqn import LqnState, UpdateReason
from .problems import Kind, make_subproblem_case
from .subproblem import (Case, ToleranceSet, cauchy_point, implicit_spectrum, newton_step,
                         norms_at, phi1, solve_subproblem)

KIND_CYCLE = (Kind.POSITIVE_DEFINITE, Kind.INDEFINITE, Kind.HARD)


@dataclass
class CheckResult:
    name: str
    count: int = 0
    failures: List[str] = field(default_factory=list)
    seconds: float = 0.0
    worst: float = 0.0

    @property
    def passed(self):
        return self.count > 0 and not self.failures

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.count - len(self.failures)}/{self.count} "
                f"ok, worst {self.worst:.3e}, {self.seconds:.2f}s")


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_case(index, seed, n_range=(5, 50), m_range=(1, 5), kind=None):
    """Instance ``index`` of a seeded stream, cycling through the three kinds."""
    rng = np.random.default_rng([seed, index])
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    n = int(rng.integers(max(n_range[0], m + 2), n_range[1] + 1))
    kind = KIND_CYCLE[index % 3] if kind is None else Kind(kind)
    return make_subproblem_case(kind, n, m, int(rng.integers(2 ** 31)))


@_timed
def check_oracle(instances=500, seed=0, nu=1e-7, model_rtol=1e-8, kkt_rtol=1e-6,
                 cauchy_slack=1e-10):
    """Reduced solver versus the dense Cholesky oracle, plus Cauchy decrease."""
    res = CheckResult("oracle")
    tol = ToleranceSet(nu=nu)
    for i in range(instances):
        case = random_case(i, seed)
        state, g, sigma = case.state, case.g, case.sigma
        res.count += 1
        tag = f"#{i} {case.kind.value} n={state.n} k={state.k}"
        try:
            sol = solve_subproblem(state, g, sigma, tol)
            B = state.dense()
            ref = dense_solve_subproblem(B, g, sigma, nu=nu)
        except Exception as exc:  # any failure counts against the battery
            res.failures.append(f"{tag}: {type(exc).__name__}: {exc}")
            continue
        m_red = dense_model(B, g, sigma, sol.s_star)
        m_ref = dense_model(B, g, sigma, ref.s_star)
        excess = (m_red - m_ref) / (1.0 + abs(m_ref))
        kkt = np.linalg.norm(B @ sol.s_star + sol.lambda_star * sol.s_star + g)
        kkt /= max(1.0, np.linalg.norm(g))
        gap = 0.0
        if sol.case is not Case.HARD_CASE:
            gap = abs(np.linalg.norm(sol.s_star) - sol.lambda_star / sigma)
        _, m_c = cauchy_point(state, g, sigma)
        res.worst = max(res.worst, excess, kkt / kkt_rtol, gap / nu)
        if excess > model_rtol:
            res.failures.append(f"{tag}: model above oracle by {excess:.3e}")
        if kkt > kkt_rtol:
            res.failures.append(f"{tag}: KKT residual {kkt:.3e}")
        if gap > nu:
            res.failures.append(f"{tag}: secular gap {gap:.3e}")
        if m_red > m_c + cauchy_slack:
            res.failures.append(f"{tag}: worse than Cauchy point by {m_red - m_c:.3e}")
    return res


@_timed
def check_hardcase(instances=50, seed=0, samples=100_000, slack=1e-4):
    """Global optimality of hard-case solutions in 2 and 3 dimensions."""
    res = CheckResult("hardcase")
    for i in range(instances):
        rng = np.random.default_rng([seed, 7, i])
        n = 2 + i % 2
        m = int(rng.integers(1, n))
        case = make_subproblem_case(Kind.HARD, n, m, int(rng.integers(2 ** 31)))
        state, g, sigma = case.state, case.g, case.sigma
        res.count += 1
        tag = f"#{i} n={n} k={state.k}"
        try:
            sol = solve_subproblem(state, g, sigma)
        except Exception as exc:
            res.failures.append(f"{tag}: {type(exc).__name__}: {exc}")
            continue
        B = state.dense()
        radius = 2.0 * sol.lambda_star / sigma + 1.0
        _, m_bf = brute_force_min(B, g, sigma, radius, samples, seed=i)
        m_star = dense_model(B, g, sigma, sol.s_star)
        res.worst = max(res.worst, m_star - m_bf)
        if sol.case is not Case.HARD_CASE:
            res.failures.append(f"{tag}: classified {sol.case.value}")
        if m_star > m_bf + slack:
            res.failures.append(f"{tag}: m(s*)={m_star:.8g} above sampled {m_bf:.8g}")
    return res


@_timed
def check_newton(instances=100, seed=0, rtol=1e-4):
    """Newton correction against finite-difference ``-phi1/phi1'``."""
    res = CheckResult("newton")
    rng = np.random.default_rng([seed, 5])
    for i in range(instances):
        case = random_case(i, seed + 1)
        spec = implicit_spectrum(case.state, case.g)
        lower = max(0.0, -spec.lambda1)
        lam = lower + max(lower, 1.0) * 10.0 ** rng.uniform(-3, 1)
        sigma = 10.0 ** rng.uniform(-1, 1)
        h = 1e-6 * lam
        dphi = (phi1(spec, lam + h, sigma) - phi1(spec, lam - h, sigma)) / (2 * h)
        fd = -phi1(spec, lam, sigma) / dphi
        dl = newton_step(spec, lam, sigma)
        err = abs(dl - fd) / max(abs(fd), 1e-300)
        res.count += 1
        res.worst = max(res.worst, err)
        if err > rtol:
            res.failures.append(f"#{i}: newton {dl:.6e} vs fd {fd:.6e}")
    return res


@_timed
def check_sgd_limit(instances=100, seed=0, sigma=1e9, min_cos=0.9999):
    """Huge sigma sends the step toward steepest descent."""
    res = CheckResult("sgd-limit")
    for i in range(instances):
        case = random_case(i, seed + 2)
        g = case.g / np.linalg.norm(case.g)
        sol = solve_subproblem(case.state, g, sigma)
        s = sol.s_star
        cos = float(-(s @ g) / (np.linalg.norm(s) * np.linalg.norm(g)))
        res.count += 1
        res.worst = max(res.worst, 1.0 - cos)
        if cos < min_cos:
            res.failures.append(f"#{i}: cosine {cos:.8f}")
    return res


def _cache_error(state):
    S, Y = state.S, state.Y
    err = 0.0
    for cache, ref in ((state.StS, S @ S.T), (state.StY, S @ Y.T), (state.YtY, Y @ Y.T)):
        if cache.shape != ref.shape:
            return np.inf
        if ref.size:
            err = max(err, np.abs(cache - ref).max() / max(1.0, np.abs(ref).max()))
    return err


@_timed
def check_invariants(sequences=200, seed=0, ops=25, secant_rtol=1e-8, cache_rtol=1e-12):
    """Secant equations and Gram caches along random update/reset sequences.

    Pairs within a sequence come from one symmetric (possibly indefinite)
    matrix so that all stored secant equations hold simultaneously; the
    sequences mix in near-parallel steps, zero-curvature pairs, non-finite
    pairs and explicit trims.
    """
    res = CheckResult("invariants")
    for q in range(sequences):
        rng = np.random.default_rng([seed, 11, q])
        n = int(rng.integers(5, 41))
        m = int(rng.integers(1, 7))
        A = rng.standard_normal((n, n))
        H = 0.5 * (A + A.T) + rng.uniform(-1, 3) * np.eye(n)
        state = LqnState(n, m, gamma=float(rng.uniform(0.5, 2.0)))
        bad = []
        for step in range(ops):
            r = rng.random()
            s = rng.standard_normal(n)
            if r < 0.65:
                out = state.try_update(s, H @ s)
            elif r < 0.75 and state.k:
                s = state.S[-1] * (1.0 + 1e-9) + 1e-10 * s
                out = state.try_update(s, H @ s)
            elif r < 0.82:
                out = state.try_update(s, state.bmul(s))
                if out.reason is not UpdateReason.CURVATURE_SKIP:
                    bad.append(f"step {step}: zero-residual pair gave {out.reason.value}")
            elif r < 0.88:
                s[0] = np.nan
                out = state.try_update(s, H @ np.nan_to_num(s))
                if out.reason is not UpdateReason.DEGENERATE_SKIP:
                    bad.append(f"step {step}: non-finite pair gave {out.reason.value}")
            elif state.k:
                state.reset_trim()
                out = None
            else:
                continue
            cerr = _cache_error(state)
            res.worst = max(res.worst, cerr / cache_rtol)
            if cerr > cache_rtol:
                bad.append(f"step {step}: cache error {cerr:.3e}")
            if state.k and (out is None or out.accepted):
                BS = np.array([state.bmul(si) for si in state.S])
                serr = np.linalg.norm(BS - state.Y) / max(1.0, np.linalg.norm(state.Y))
                res.worst = max(res.worst, serr / secant_rtol)
                if serr > secant_rtol:
                    bad.append(f"step {step}: secant error {serr:.3e}")
        res.count += 1
        if bad:
            res.failures.append(f"sequence {q} (n={n}, m={m}): " + "; ".join(bad[:3]))
    return res


@_timed
def check_spectrum(instances=60, seed=0, atol=1e-8):
    """Implicit spectrum against a dense eigendecomposition, and dense SR1 equivalence."""
    res = CheckResult("spectrum")
    for i in range(instances):
        case = random_case(i, seed + 3)
        state = case.state
        spec = implicit_spectrum(state, case.g)
        B = state.dense()
        w = np.linalg.eigvalsh(B)
        err = np.abs(np.sort(spec.eigenvalues()) - w).max() / max(1.0, np.abs(w).max())
        # rebuild B by the recursive rank-one formula from gamma*I
        D = state.gamma * np.eye(state.n)
        for s, y in zip(state.S, state.Y):
            D = dense_sr1_update(D, s, y)
        derr = np.abs(D - B).max() / max(1.0, np.abs(B).max())
        res.count += 1
        res.worst = max(res.worst, err / atol, derr / atol)
        if err > atol:
            res.failures.append(f"#{i}: eigenvalue error {err:.3e}")
        if derr > atol:
            res.failures.append(f"#{i}: dense SR1 mismatch {derr:.3e}")
    return res


CHECKS = {
    "oracle": check_oracle,
    "hardcase": check_hardcase,
    "newton": check_newton,
    "sgd-limit": check_sgd_limit,
    "invariants": check_invariants,
    "spectrum": check_spectrum,
}


def run_checks(only=None, seed=0, instances=None):
    """Run the named batteries (all by default).

    ``instances`` overrides the instance count of the oracle battery.
    """
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")
    results = []
    for name in names:
        if name == "oracle" and instances is not None:
            results.append(CHECKS[name](instances=instances, seed=seed))
        else:
            results.append(CHECKS[name](seed=seed))
    return results
