"""Command-line entry point: ``fairsched generate | solve | evaluate | experiment``.

Exit codes: 0 success, 2 bad input, 3 the robust run ended with positive
slack, 4 solver budget exhausted, 5 too many failed replications.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import io
from .evaluation import CSV_FIELDS, GeneratorParams, UnsupportedSupportError, evaluate, run_experiment
from .lp import BACKENDS, SolverError
from .model import STREAM_EVAL_DRO, ScalingPair, generate_instance, validate_instance
from .sequential import SolverConfig, build_assignment_model, mean_value_solve, sequential_solve

EXIT_OK, EXIT_INPUT, EXIT_SLACK, EXIT_BUDGET, EXIT_QUOTA = 0, 2, 3, 4, 5
SUCCESS_QUOTA = 0.9

log = logging.getLogger("fairsched")


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-iters", type=int, default=40)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--big-m", type=float, default=None)
    p.add_argument("--floor", type=float, default=None, help="lower bound on scaling entries")
    p.add_argument("--force-generic", action="store_true", help="use the polytope build for boxes too")
    p.add_argument("--backend", choices=BACKENDS, default="bundled")
    p.add_argument("--max-nodes", type=int, default=100_000)


def _config(args) -> SolverConfig:
    return SolverConfig(max_iters=args.max_iters, tol=args.tol, big_m=args.big_m, scaling_floor=args.floor,
                        force_generic_path=args.force_generic, backend=args.backend, max_nodes=args.max_nodes)


def _add_generator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tasks", type=int, default=20)
    p.add_argument("--workers", type=int, default=5)
    p.add_argument("--delta", type=float, default=5.0)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--mu-range", type=float, nargs=2, default=(0.0, 100.0), metavar=("LO", "HI"))
    p.add_argument("--halfwidth-range", type=float, nargs=2, default=(0.0, 3.0), metavar=("LO", "HI"))
    p.add_argument("--reward-range", type=float, nargs=2, default=(0.0, 100.0), metavar=("LO", "HI"))


def _generator(args) -> GeneratorParams:
    for name, (lo, hi) in (("mu", args.mu_range), ("halfwidth", args.halfwidth_range),
                           ("reward", args.reward_range)):
        if not 0 <= lo < hi:
            raise ValueError(f"--{name}-range must satisfy 0 <= LO < HI")
    if args.tasks < 1 or args.workers < 1:
        raise ValueError("--tasks and --workers must be positive")
    if not 0 < args.epsilon < 1:
        raise ValueError("epsilon out of (0,1)")
    if args.delta < 0:
        raise ValueError("delta must be nonnegative")
    return GeneratorParams(args.tasks, args.workers, args.delta, args.epsilon, tuple(args.mu_range),
                           tuple(args.halfwidth_range), tuple(args.reward_range))


def cmd_generate(args) -> int:
    try:
        params = _generator(args)
    except ValueError as err:
        return _fail(EXIT_INPUT, str(err))
    inst = generate_instance(args.seed, **asdict(params))
    problems = validate_instance(inst)
    if problems:
        return _fail(EXIT_INPUT, "; ".join(problems))
    try:
        io.save_instance(args.output, inst)
    except OSError as err:
        return _fail(EXIT_INPUT, f"cannot write {args.output}: {err.strerror}")
    print(f"wrote {args.output}: {inst.n_tasks} tasks, {inst.n_workers} workers, "
          f"delta={inst.delta:g}, epsilon={inst.epsilon:g}")
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        inst = io.load_instance(args.instance)
        cfg = _config(args)
        cfg.resolve_floor(inst.n_workers)
    except (io.DocumentError, ValueError) as err:
        return _fail(EXIT_INPUT, str(err))
    if args.dump_lp:
        model, _, _ = build_assignment_model(ScalingPair.uniform(inst.n_workers, cfg.resolve_floor(inst.n_workers)),
                                             inst, cfg)
        Path(args.dump_lp).write_text(model.to_lp_text())
    start = time.perf_counter()
    try:
        if args.method == "dro":
            trace = sequential_solve(inst, cfg)
            doc = io.trace_to_doc(trace, inst, cfg, time.perf_counter() - start)
        else:
            res = mean_value_solve(inst, cfg)
            doc = io.mean_result_to_doc(res, inst, cfg, time.perf_counter() - start)
    except SolverError as err:
        return _fail(EXIT_BUDGET, str(err))
    doc["run"] = io.run_doc(args.method, cfg, args.instance, args.output)
    try:
        io.write_json(args.output, doc)
    except OSError as err:
        return _fail(EXIT_INPUT, f"cannot write {args.output}: {err.strerror}")
    print(f"{args.method}: reward={doc['reward']:.4f} g={doc['g']:.6g} v={doc['v']:.3g} "
          f"time={doc['wall_time_s']:.1f}s -> {args.output}")
    if args.method == "dro" and not doc["feasible_for_dro"]:
        print("note: terminal slack is positive; the assignment is not certified", file=sys.stderr)
        return EXIT_SLACK
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        inst = io.load_instance(args.instance)
        x = io.assignment_from_doc(io.read_json(args.assignment), inst)
        report = evaluate(x, inst, args.samples, args.seed, STREAM_EVAL_DRO, keep_spreads=True)
    except (io.DocumentError, UnsupportedSupportError, ValueError) as err:
        return _fail(EXIT_INPUT, str(err))
    out = Path(args.output)
    spreads_path = Path(args.spreads) if args.spreads else out.with_name(out.stem + "_spreads.csv")
    try:
        io.write_json(out, {**report.to_dict(), "delta": inst.delta, "epsilon": inst.epsilon,
                            "seed": args.seed, "spreads_csv": str(spreads_path)})
        io.write_csv(spreads_path, ("sample", "spread"), enumerate(report.spreads.tolist()))
    except OSError as err:
        return _fail(EXIT_INPUT, f"cannot write output: {err.strerror}")
    flag = "" if report.sampler_mean_matches_mu else " (box not centred on mu)"
    print(f"violation={report.violation_probability:.4f} reward={report.reward:.4f} "
          f"n={report.n_samples}{flag} -> {out}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        params = _generator(args)
        cfg = _config(args)
        if args.replications < 1 or args.samples < 1:
            raise ValueError("--replications and --samples must be positive")
    except ValueError as err:
        return _fail(EXIT_INPUT, str(err))
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        return _fail(EXIT_INPUT, f"cannot create {out}: {err.strerror}")
    summary = run_experiment(params, cfg, args.replications, args.samples, args.seed, jobs=args.jobs,
                             time_budget=args.time_budget)
    doc = {"params": asdict(params), "config": cfg.to_dict(), "base_seed": args.seed,
           "n_samples": args.samples, **summary.to_dict()}
    io.write_json(out / "summary.json", doc)
    io.write_csv(out / "replications.csv", CSV_FIELDS, ([row[k] for k in CSV_FIELDS] for row in summary.rows))
    hist_rows = []
    for method, ms in summary.methods.items():
        for quantity, h in (("violation", ms.violation_histogram), ("reward", ms.reward_histogram)):
            for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
                hist_rows.append((method, quantity, lo, hi, c))
    io.write_csv(out / "histograms.csv", ("method", "quantity", "bin_lo", "bin_hi", "count"), hist_rows)
    io.write_csv(out / "spreads.csv", ("method", "sample", "spread"),
                 ((m, k, v) for m, vals in summary.spread_samples.items() for k, v in enumerate(vals)))
    for method, ms in summary.methods.items():
        print(f"{method:>5}: mean violation={ms.mean_violation:.4f} mean reward={ms.mean_reward:.2f}")
    print(f"succeeded {summary.n_succeeded}/{summary.n_replications} in {summary.wall_time_s:.0f}s -> {out}")
    return EXIT_OK if summary.success_rate >= SUCCESS_QUOTA else EXIT_QUOTA


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsched", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic instance")
    p.add_argument("--seed", type=int, required=True)
    _add_generator_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve an instance")
    p.add_argument("instance")
    p.add_argument("--method", choices=("dro", "mean"), default="dro")
    _add_solver_flags(p)
    p.add_argument("--dump-lp", metavar="PATH", help="write the first assignment model as LP text")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="Monte Carlo evaluation of an assignment")
    p.add_argument("instance")
    p.add_argument("assignment")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spreads", metavar="CSV", help="per-sample spread output (default: beside the report)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="replicated generate/solve/evaluate comparison")
    _add_generator_flags(p)
    _add_solver_flags(p)
    p.add_argument("--replications", type=int, default=500)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (FAIRSCHED_JOBS overrides)")
    p.add_argument("--time-budget", type=float, default=None, metavar="SECONDS")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
