"""Acceptance criteria 1-10, each at its stated tolerance and time limit."""
import time

import numpy as np
import pytest

from arclqn import (ArcConfig, Branch, Budget, Kind, LogisticSynth, Quadratic, Rosenbrock,
                    make_subproblem_case, run)
from arclqn.bench import newton_iteration_time, time_method
from arclqn.subproblem import ToleranceSet
from arclqn.verify import (check_hardcase, check_invariants, check_newton, check_oracle,
                           check_sgd_limit)

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def oracle_result():
    return check_oracle(instances=500, seed=0, nu=1e-7, model_rtol=1e-8, kkt_rtol=1e-6,
                        cauchy_slack=1e-10)


def test_criterion_01_oracle_equivalence(oracle_result, criterion):
    res = oracle_result
    own = [f for f in res.failures if "Cauchy" not in f]
    ok = res.count == 500 and not own and res.seconds < 60
    criterion(1, ok, f"{res.count - len(own)}/{res.count} instances match the dense oracle "
                     f"(model, KKT, secular gap), {res.seconds:.1f}s")
    assert ok, own[:5]


def test_criterion_02_hard_case_global_optimality(criterion):
    res = check_hardcase(instances=50, seed=0, samples=100_000, slack=1e-4)
    ok = res.passed and res.count == 50 and res.seconds < 60
    criterion(2, ok, f"{res.count - len(res.failures)}/50 hard cases within 1e-4 of sampling "
                     f"minimum (worst excess {res.worst:.2e}), {res.seconds:.1f}s")
    assert ok, res.failures[:5]


def test_criterion_03_norm_trick_speedup(criterion):
    t0 = time.perf_counter()
    big = make_subproblem_case(Kind.INDEFINITE, 1_000_000, 5, seed=0)
    small = make_subproblem_case(Kind.INDEFINITE, 10_000, 5, seed=0)
    tol = ToleranceSet(nu=1e-7)
    naive = time_method("naive", big, repeats=10, tol=tol)
    trick = time_method("normtrick", big, repeats=10, tol=tol)
    per_big = newton_iteration_time(big, tol, repeats=10)
    per_small = newton_iteration_time(small, tol, repeats=10)
    elapsed = time.perf_counter() - t0
    speedup = naive.seconds / trick.seconds
    ratio = per_big / per_small
    ok = (naive.verified and trick.verified and trick.seconds <= naive.seconds / 5
          and ratio <= 2.0 and elapsed < 300)
    criterion(3, ok, f"n=1e6 normtrick {trick.seconds:.3g}s vs naive {naive.seconds:.3g}s "
                     f"({speedup:.1f}x); per-iteration ratio 1e6/1e4 = {ratio:.2f}, "
                     f"{elapsed:.1f}s")
    assert ok


def test_criterion_04_dense_infeasibility(criterion):
    t0 = time.perf_counter()
    case = make_subproblem_case(Kind.INDEFINITE, 10_000, 5, seed=0)
    tol = ToleranceSet(nu=1e-7)
    trick = time_method("normtrick", case, repeats=10, tol=tol)
    B = case.state.dense()  # formed outside the timed region
    dense = time_method("dense", case, repeats=1, timeout=280.0, tol=tol, dense_B=B)
    del B
    elapsed = time.perf_counter() - t0
    if dense.skipped:
        ok, detail = False, f"dense solve did not finish ({dense.note})"
    else:
        factor = dense.seconds / trick.seconds
        ok = factor >= 100 and dense.verified and trick.verified and elapsed < 300
        detail = (f"n=1e4 dense {dense.seconds:.3g}s vs normtrick {trick.seconds:.3g}s "
                  f"({factor:.0f}x)")
    criterion(4, ok, f"{detail}, {elapsed:.1f}s")
    assert ok


def test_criterion_05_newton_fidelity(criterion):
    res = check_newton(instances=100, seed=0, rtol=1e-4)
    ok = res.passed and res.count == 100 and res.seconds < 1.0
    criterion(5, ok, f"{res.count - len(res.failures)}/100 Newton corrections within 1e-4 of "
                     f"finite differences (worst {res.worst:.2e}), {res.seconds:.2f}s")
    assert ok, res.failures[:5]


def test_criterion_06_sgd_limit(criterion):
    res = check_sgd_limit(instances=100, seed=0, sigma=1e9, min_cos=0.9999)
    ok = res.passed and res.count == 100 and res.seconds < 10
    criterion(6, ok, f"{res.count - len(res.failures)}/100 steps with cosine >= 0.9999 at "
                     f"sigma=1e9 (worst 1-cos {res.worst:.2e}), {res.seconds:.2f}s")
    assert ok, res.failures[:5]


def test_criterion_07_secant_and_caches(criterion):
    res = check_invariants(sequences=200, seed=0, secant_rtol=1e-8, cache_rtol=1e-12)
    ok = res.passed and res.count == 200 and res.seconds < 10
    criterion(7, ok, f"{res.count - len(res.failures)}/200 update/reset sequences keep "
                     f"secant and cache invariants, {res.seconds:.2f}s")
    assert ok, res.failures[:5]


def test_criterion_08_outer_loop(criterion):
    t0 = time.perf_counter()
    p = Rosenbrock(100)
    tr = run(p.default_x0(), ArcConfig.deterministic(), p, Budget(max_iters=5000, gtol=1e-5))
    gmax = tr.full_evals[-1].grad_norm_inf
    f_acc = [r.f_after for r in tr.reports if r.branch is Branch.ACCEPTED]
    decreasing = bool(np.all(np.diff(f_acc) < 0))

    cfg = ArcConfig.deterministic(eta1=np.inf, eta2=np.inf)
    q = Quadratic(50, condition=100.0)
    x0 = np.linspace(-1.0, 1.0, 50)
    forced = run(x0, cfg, q, Budget(max_iters=200))
    x = x0.copy()
    for _ in range(200):
        x = x - cfg.alpha2 * q.eval(x)[1]
    sgd_exact = forced.accepted == 0 and np.array_equal(forced.x, x)
    elapsed = time.perf_counter() - t0

    ok = (gmax <= 1e-5 and len(tr.reports) <= 5000 and decreasing and sgd_exact
          and elapsed < 60)
    criterion(8, ok, f"Rosenbrock n=100 ||g||inf={gmax:.2e} after {len(tr.reports)} iterations, "
                     f"accepted f strictly decreasing={decreasing}, forced rejection equals "
                     f"SGD={sgd_exact}, {elapsed:.1f}s")
    assert ok


def test_criterion_09_stochastic_run(criterion):
    t0 = time.perf_counter()
    p = LogisticSynth(200, 5000, seed=0)
    budget = Budget(max_epochs=50, gtol=1e-2, gtol_norm="2")
    a = run(np.zeros(200), ArcConfig(), p, budget, seed=0, batch_size=128)
    b = run(np.zeros(200), ArcConfig(), p, budget, seed=0, batch_size=128)
    elapsed = time.perf_counter() - t0
    same = a.to_csv() == b.to_csv() and np.array_equal(a.x, b.x)
    gnorm = a.full_evals[-1].grad_norm
    epochs = len(a.full_evals)
    ok = a.stop_reason == "gtol" and gnorm <= 1e-2 and epochs <= 50 and same and elapsed < 120
    criterion(9, ok, f"logistic full-batch ||g||={gnorm:.2e} reached in epoch {epochs} "
                     f"(batch 128, default config), deterministic={same}, {elapsed:.1f}s")
    assert ok


def test_criterion_10_cauchy_decrease(oracle_result, criterion):
    res = oracle_result
    bad = [f for f in res.failures if "Cauchy" in f]
    ok = res.count == 500 and not bad
    criterion(10, ok, f"{res.count - len(bad)}/{res.count} oracle instances satisfy "
                      f"m(s*) <= m(s_c) + 1e-10")
    assert ok, bad[:5]
