"""Command-line entry point: ``arclqn {bench-subproblem,train,verify}``."""
import argparse
import json
import os
import sys

from . import bench
from .arc import ArcConfig, Budget, run
from .problems import make_problem
from .verify import CHECKS, run_checks

SEED_ENV = "ARCLQN_SEED"
DEFAULT_DIMS = "100,1000,10000,100000,1000000"


def _csv_list(choices=None, cast=str):
    def parse(text):
        items = [item.strip() for item in text.split(",") if item.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        out = []
        for item in items:
            try:
                value = cast(item)
            except ValueError:
                raise argparse.ArgumentTypeError(f"invalid value {item!r}")
            if choices is not None and value not in choices:
                raise argparse.ArgumentTypeError(
                    f"invalid choice {item!r} (choose from {', '.join(choices)})")
            out.append(value)
        return out
    return parse


def _dim(text):
    # accepts 1000, 1e6, 1_000_000
    value = float(text.replace("_", ""))
    if value != int(value) or value < 2:
        raise ValueError(text)
    return int(value)


def _positive(cast):
    def parse(text):
        try:
            value = cast(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}")
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return value
    return parse


def build_parser():
    parser = argparse.ArgumentParser(
        prog="arclqn",
        description="Cubic-regularization subproblem solver for limited-memory SR1 "
                    "matrices, with an ARC outer loop.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench-subproblem", help="time the subproblem solvers (CSV)")
    b.add_argument("--dims", type=_csv_list(cast=_dim), default=_csv_list(cast=_dim)(DEFAULT_DIMS),
                   help=f"comma-separated problem sizes (default {DEFAULT_DIMS})")
    b.add_argument("--kinds", type=_csv_list(bench.KINDS), default=list(bench.KINDS))
    b.add_argument("--methods", type=_csv_list(bench.METHODS), default=list(bench.METHODS))
    b.add_argument("--m", type=_positive(int), default=3, help="stored pairs (default 3)")
    b.add_argument("--sigma", type=_positive(float), default=1.0)
    b.add_argument("--nu", type=_positive(float), default=1e-7)
    b.add_argument("--repeats", type=_positive(int), default=10)
    b.add_argument("--timeout", type=_positive(float), default=300.0,
                   help="seconds per solve before reporting '-' (default 300)")
    b.add_argument("--mean", action="store_true", help="report the mean instead of the median")
    b.add_argument("--dense-max-n", type=int, default=bench.DENSE_MAX_N,
                   help="largest n for the dense baseline (default 2000)")
    b.add_argument("--threads", type=_positive(int), default=1,
                   help="instances timed concurrently (never within one solve)")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="write CSV here instead of stdout")

    t = sub.add_parser("train", help="run the ARC outer loop on a test problem")
    t.add_argument("--problem", choices=("rosenbrock", "quadratic", "logistic"), required=True)
    t.add_argument("--n", type=_positive(int), default=100, help="dimension (rosenbrock, quadratic)")
    t.add_argument("--condition", type=float, default=100.0, help="quadratic condition number")
    t.add_argument("--n-features", type=_positive(int), default=200)
    t.add_argument("--N", type=_positive(int), default=5000, help="logistic dataset size")
    t.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic dataset")
    t.add_argument("--batch", type=_positive(int), default=None,
                   help="minibatch size (default: full batch)")
    t.add_argument("--iters", type=_positive(int), default=None)
    t.add_argument("--epochs", type=_positive(float), default=None)
    t.add_argument("--max-seconds", type=_positive(float), default=None)
    t.add_argument("--gtol", type=_positive(float), default=None,
                   help="stop once the full gradient norm is at most this")
    t.add_argument("--gtol-norm", choices=("inf", "2"), default="inf")
    t.add_argument("--eval-every", type=_positive(int), default=None,
                   help="steps between full-objective evaluations (default: one epoch)")
    t.add_argument("--config", help="JSON file with ArcConfig fields")
    t.add_argument("--seed", type=int, default=0, help="minibatch sampling seed")
    t.add_argument("--trace", help="write the per-step CSV trace here")
    t.add_argument("--summary", help="write the summary JSON here (default: stdout)")
    t.add_argument("--timing", action="store_true", help="record wall times in the trace")

    v = sub.add_parser("verify", help="run the oracle and property batteries")
    v.add_argument("--only", type=_csv_list(tuple(CHECKS)), default=None,
                   help=f"comma-separated subset of: {', '.join(CHECKS)}")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--instances", type=_positive(int), default=None,
                   help="number of oracle comparisons (default 500)")
    v.add_argument("--verbose", action="store_true", help="list every failure")
    return parser


def _seed(args):
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"arclqn: {SEED_ENV} must be an integer, got {env!r}")
    return args.seed


def cmd_bench(args):
    rows = bench.run_bench(args.dims, args.kinds, args.methods, m=args.m, seed=_seed(args),
                           repeats=args.repeats, timeout=args.timeout, sigma=args.sigma,
                           nu=args.nu, aggregate="mean" if args.mean else "median",
                           dense_max_n=args.dense_max_n, threads=args.threads)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            bench.write_csv(rows, fh)
    else:
        bench.write_csv(rows, sys.stdout)
    unverified = [r for r in rows if not r.skipped and not r.verified]
    return 1 if unverified else 0


def _load_config(path, deterministic):
    if path is None:
        return ArcConfig.deterministic() if deterministic else ArcConfig()
    with open(path, encoding="utf-8") as fh:
        return ArcConfig.from_json(fh.read())


def cmd_train(args, parser):
    kwargs = {"n": args.n, "condition": args.condition, "n_features": args.n_features,
              "N": args.N, "seed": args.data_seed}
    try:
        problem = make_problem(args.problem, **kwargs)
    except ValueError as exc:
        parser.error(str(exc))
    full_batch = args.batch is None or args.batch >= problem.size
    try:
        cfg = _load_config(args.config, deterministic=problem.size == 1 or full_batch)
    except (OSError, ValueError, TypeError) as exc:
        print(f"arclqn train: bad config: {exc}", file=sys.stderr)
        return 2
    if args.iters is None and args.epochs is None and args.max_seconds is None:
        parser.error("train needs at least one of --iters, --epochs, --max-seconds")
    budget = Budget(args.iters, args.max_seconds, args.epochs, args.gtol, args.gtol_norm)
    trace = run(problem.default_x0(), cfg, problem, budget, seed=_seed(args),
                batch_size=args.batch, eval_every=args.eval_every)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            fh.write(trace.to_csv(timing=args.timing))
    summary = trace.summary()
    summary["problem"] = args.problem
    summary["config"] = json.loads(cfg.to_json())
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 1 if summary["stop_reason"].startswith("non-finite") else 0


def cmd_verify(args):
    results = run_checks(args.only, seed=_seed(args), instances=args.instances)
    for res in results:
        print(res.line())
        shown = res.failures if args.verbose else res.failures[:5]
        for msg in shown:
            print(f"    {msg}")
        if len(shown) < len(res.failures):
            print(f"    ... {len(res.failures) - len(shown)} more")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} batteries passed")
    return 1 if failed else 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench-subproblem":
        return cmd_bench(args)
    if args.command == "train":
        return cmd_train(args, parser)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
