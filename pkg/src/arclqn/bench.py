"""Timing harness for the cubic subproblem solvers.

Three methods are compared on generated instances:

* ``dense``     explicit SR1 matrix, Cholesky-based Newton iteration
* ``naive``     limited-memory solver forming s and w in R^n every iteration
* ``normtrick`` limited-memory solver with O(k) norm evaluations

Instance generation (and forming the dense matrix) is excluded from the
timings; every reported row is re-checked against the KKT conditions.
"""
import csv
import statistics
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dense import dense_solve_subproblem
from .errors import BenchTimeout, SolverError
from .problems import make_subproblem_case
from .subproblem import Case, Mode, ToleranceSet, implicit_spectrum, solve_lambda, solve_subproblem

METHODS = ("dense", "naive", "normtrick")
KINDS = ("pd", "indefinite", "hard")
CSV_HEADER = ("method", "kind", "n", "m", "median_seconds", "newton_iters", "verified")
DENSE_MAX_N = 2000
SENTINEL = "-"


@dataclass
class BenchRow:
    method: str
    kind: str
    n: int
    m: int
    seconds: Optional[float]
    newton_iters: Optional[int]
    verified: Optional[bool]
    note: str = ""

    @property
    def skipped(self):
        return self.seconds is None

    def as_csv(self):
        if self.skipped:
            return [self.method, self.kind, self.n, self.m, SENTINEL, SENTINEL, SENTINEL]
        return [self.method, self.kind, self.n, self.m, format_seconds(self.seconds),
                self.newton_iters, "true" if self.verified else "false"]


def format_seconds(x):
    """Scientific notation with a bare exponent, e.g. ``1.90e-2``."""
    mant, exp = f"{x:.2e}".split("e")
    return f"{mant}e{int(exp)}"


def kkt_ok(state, g, sigma, sol, nu, rtol=1e-6):
    """Residual ``(B + lam I) s + g`` and, off the hard case, the secular gap."""
    s = sol.s_star
    res = np.linalg.norm(state.bmul(s) + sol.lambda_star * s + g)
    if res > rtol * max(1.0, np.linalg.norm(g)):
        return False
    if sol.case is not Case.HARD_CASE:
        if abs(np.linalg.norm(s) - sol.lambda_star / sigma) > nu:
            return False
    return True


def _solver(method, case, tol, dense_B):
    state, g, sigma = case.state, case.g, case.sigma
    if method == "normtrick":
        return lambda deadline: solve_subproblem(state, g, sigma, tol, Mode.NORM_TRICK)
    if method == "naive":
        return lambda deadline: solve_subproblem(state, g, sigma, tol, Mode.NAIVE_LQN)
    if method == "dense":
        return lambda deadline: dense_solve_subproblem(
            dense_B, g, sigma, nu=tol.nu, eps_shift=tol.eps_shift,
            hard_rtol=tol.hard_rtol, deadline=deadline)
    raise ValueError(f"unknown method {method!r}")


def time_method(method, case, repeats=10, timeout=300.0, tol=ToleranceSet(),
                aggregate="median", dense_B=None):
    """Time ``repeats`` solves of one instance.

    A repeat that runs past ``timeout`` seconds ends the measurement and the
    row is reported with the sentinel. Only the dense solver can be
    interrupted mid-solve; the limited-memory solvers are checked between
    repeats.
    """
    kind = case.kind.value
    n, m = case.state.n, case.state.k
    if method == "dense" and dense_B is None:
        dense_B = case.state.dense()
    solve = _solver(method, case, tol, dense_B)
    times = []
    sol = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        try:
            sol = solve(t0 + timeout)
        except BenchTimeout:
            return BenchRow(method, kind, n, m, None, None, None, "timeout")
        except SolverError as exc:
            return BenchRow(method, kind, n, m, None, None, None, f"failed: {exc}")
        dt = time.perf_counter() - t0
        if dt > timeout:
            return BenchRow(method, kind, n, m, None, None, None, "timeout")
        times.append(dt)
    agg = statistics.fmean(times) if aggregate == "mean" else statistics.median(times)
    ok = kkt_ok(case.state, case.g, case.sigma, sol, tol.nu)
    return BenchRow(method, kind, n, m, agg, sol.newton_iters, ok)


def newton_iteration_time(case, tol=ToleranceSet(), repeats=10):
    """Median wall time of one norm-trick Newton iteration.

    Times the secular solve alone on a prebuilt spectrum and divides by the
    iteration count; this is the part whose cost should not depend on n.
    """
    spec = implicit_spectrum(case.state, case.g)
    lower = max(0.0, -spec.lambda1)
    per_iter = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        lam, iters = solve_lambda(spec, case.sigma, tol.nu, lower + tol.eps_shift)
        dt = time.perf_counter() - t0
        per_iter.append(dt / max(iters, 1))
    return statistics.median(per_iter)


def run_bench(dims, kinds, methods, m=3, seed=0, repeats=10, timeout=300.0,
              sigma=1.0, nu=1e-7, aggregate="median", dense_max_n=DENSE_MAX_N,
              threads=1):
    """Rows for every (kind, n, method) combination, in that nesting order."""
    tol = ToleranceSet(nu=nu)
    jobs = [(kind, n) for kind in kinds for n in dims]

    def one(job):
        kind, n = job
        case = make_subproblem_case(kind, n, m, seed, sigma)
        rows = []
        for method in methods:
            if method == "dense" and n > dense_max_n:
                rows.append(BenchRow(method, kind, n, case.state.k, None, None, None, "skipped"))
                continue
            rows.append(time_method(method, case, repeats, timeout, tol, aggregate))
        return rows

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(one, jobs))
    else:
        chunks = [one(job) for job in jobs]
    return [row for chunk in chunks for row in chunk]


def write_csv(rows, stream):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.as_csv())
