import csv
import io
import json

import pytest

from arclqn import Kind, make_subproblem_case
from arclqn.bench import (CSV_HEADER, format_seconds, kkt_ok, run_bench, time_method,
                          newton_iteration_time)
from arclqn.cli import main
from arclqn.subproblem import solve_subproblem


def rows_of(text):
    return list(csv.reader(io.StringIO(text)))


def test_format_seconds():
    assert format_seconds(0.019) == "1.90e-2"
    assert format_seconds(274.0) == "2.74e2"
    assert format_seconds(1.0) == "1.00e0"


def test_bench_example(capsys):
    code = main(["bench-subproblem", "--dims", "100,1000", "--kinds", "pd",
                 "--methods", "dense,naive,normtrick", "--seed", "7"])
    rows = rows_of(capsys.readouterr().out)
    assert code == 0
    assert rows[0] == list(CSV_HEADER)
    assert ",".join(rows[0]) == "method,kind,n,m,median_seconds,newton_iters,verified"
    assert len(rows) == 7
    assert all(r[6] == "true" for r in rows[1:])
    assert {(r[0], r[2]) for r in rows[1:]} == {(m, n) for m in ("dense", "naive", "normtrick")
                                               for n in ("100", "1000")}


def test_bench_dense_sentinel(tmp_path):
    out = tmp_path / "b.csv"
    code = main(["bench-subproblem", "--dims", "300", "--kinds", "hard", "--methods",
                 "dense,normtrick", "--dense-max-n", "200", "--repeats", "2", "--mean",
                 "--out", str(out)])
    rows = rows_of(out.read_text())
    assert code == 0
    assert rows[1] == ["dense", "hard", "300", "3", "-", "-", "-"]
    assert rows[2][6] == "true"


def test_bench_unknown_method(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bench-subproblem", "--methods", "lanczos"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_bench_timeout_sentinel():
    case = make_subproblem_case(Kind.INDEFINITE, 600, 3, seed=1)
    row = time_method("dense", case, repeats=1, timeout=1e-9)
    assert row.skipped and row.as_csv()[4:] == ["-", "-", "-"]


def test_bench_threads_match_serial():
    kw = dict(dims=[50, 80], kinds=["pd", "hard"], methods=["normtrick"], repeats=1, seed=3)
    a = run_bench(**kw)
    b = run_bench(threads=2, **kw)
    assert [(r.kind, r.n, r.newton_iters, r.verified) for r in a] == \
           [(r.kind, r.n, r.newton_iters, r.verified) for r in b]


def test_kkt_check_rejects_perturbed_step():
    case = make_subproblem_case(Kind.POSITIVE_DEFINITE,
                                50, 3, seed=2)
    sol = solve_subproblem(case.state, case.g, case.sigma)
    assert kkt_ok(case.state, case.g, case.sigma, sol, 1e-7)
    sol.s_star = sol.s_star * 1.01
    assert not kkt_ok(case.state, case.g, case.sigma, sol, 1e-7)


def test_newton_iteration_time_positive():
    case = make_subproblem_case(Kind.INDEFINITE, 100, 3, seed=0)
    assert newton_iteration_time(case, repeats=3) > 0


def _train(tmp_path, name, extra=()):
    trace = tmp_path / f"{name}.csv"
    summary = tmp_path / f"{name}.json"
    code = main(["train", "--problem", "logistic", "--n-features", "10", "--N", "200",
                 "--batch", "32", "--epochs", "2", "--trace", str(trace),
                 "--summary", str(summary), *extra])
    return code, trace.read_bytes(), json.loads(summary.read_text())


def test_train_deterministic(tmp_path):
    c1, t1, s1 = _train(tmp_path, "a", ["--seed", "4"])
    c2, t2, _ = _train(tmp_path, "b", ["--seed", "4"])
    assert c1 == c2 == 0 and t1 == t2
    assert s1["iterations"] == 14 and s1["problem"] == "logistic"
    assert s1["config"]["fallback"] == "adam"


def test_seed_env_override(tmp_path, monkeypatch):
    _, ref, _ = _train(tmp_path, "a", ["--seed", "9"])
    monkeypatch.setenv("ARCLQN_SEED", "9")
    _, got, _ = _train(tmp_path, "b", ["--seed", "1"])
    assert got == ref


def test_train_rosenbrock_summary(capsys):
    code = main(["train", "--problem", "rosenbrock", "--n", "4", "--iters", "3000",
                 "--gtol", "1e-8"])
    summary = json.loads(capsys.readouterr().out)
    assert code == 0
    assert summary["stop_reason"] == "gtol"
    assert summary["grad_norm_inf"] <= 1e-8
    assert summary["config"]["fallback"] == "sgd"


def test_train_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"memory": 2, "sigma0": 4.0}))
    code = main(["train", "--problem", "quadratic", "--n", "5", "--iters", "3",
                 "--config", str(cfg)])
    summary = json.loads(capsys.readouterr().out)
    assert code == 0 and summary["config"]["memory"] == 2


@pytest.mark.parametrize("content", ['{"bogus": 1}', "not json", '{"eta1": 2, "eta2": 1}'])
def test_train_bad_config(tmp_path, content):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(content)
    assert main(["train", "--problem", "rosenbrock", "--iters", "1",
                 "--config", str(cfg)]) == 2
    assert main(["train", "--problem", "rosenbrock", "--iters", "1",
                 "--config", str(tmp_path / "missing.json")]) == 2


def test_train_needs_budget():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--problem", "rosenbrock"])
    assert exc.value.code == 2


def test_verify_only(capsys):
    assert main(["verify", "--only", "hardcase"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("PASS hardcase: 50/50")
    assert out[-1] == "1/1 batteries passed"


def test_verify_instances(capsys):
    assert main(["verify", "--only", "oracle,newton", "--seed", "42", "--instances", "40"]) == 0
    out = capsys.readouterr().out
    assert "PASS oracle: 40/40" in out and "PASS newton: 100/100" in out


def test_verify_unknown_battery():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--only", "everything"])
    assert exc.value.code == 2
