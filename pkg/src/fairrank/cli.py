"""Command-line entry points.

Subcommands:
  prepare   CSV + schema -> standardized train/test ranking task sets
  train     task set -> model parameter file (robust method)
  infer     model + task set -> rankings (and metrics when labels exist)
  sweep     full repeated lambda sweep from a config file
  report    fairest-point table from a sweep's aggregate output

Exit codes: 0 success, 1 partial cell failures during a sweep, 2
configuration or usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .core import ModelParams, PositionBias, dp_violation, ndcg
from .dataprep import (load_csv, load_schema, load_task_set,
                       make_ranking_problems, save_task_set, split,
                       standardize)
from .errors import ConfigError, FairrankError
from .inference import infer_batch, strip_relevance
from .sweep import (ExperimentConfig, _CONFIG_DOC, config_text, parse_config,
                    run_sweep, write_report)
from .trainer import Hyperparams, train
from .core import fast_solver_profile


def save_model(params: ModelParams, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"lam = {params.lam!r}\n"
                 f"gamma = {params.gamma!r}\n"
                 f"mu = {params.mu!r}\n"
                 f"outer_max_iter = {params.solver.outer_max_iter}\n"
                 "theta = " + ",".join(repr(float(t)) for t in params.theta)
                 + "\n")


def load_model(path) -> ModelParams:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                values[k.strip()] = v.strip()
    theta = np.array([float(x) for x in values["theta"].split(",")])
    solver = fast_solver_profile(
        outer_max_iter=int(values.get("outer_max_iter", 400)))
    return ModelParams(theta=theta, lam=float(values["lam"]),
                       gamma=float(values["gamma"]), mu=float(values["mu"]),
                       solver=solver)


def _cmd_prepare(args) -> int:
    schema = load_schema(args.schema or args.dataset)
    if os.path.exists(args.dataset):
        table = load_csv(args.dataset, schema)
    else:
        from .sweep import _table_from_frame
        from .synthetic import generate_standin

        table = _table_from_frame(generate_standin(args.dataset, args.seed),
                                  schema)
    seq = np.random.SeedSequence((args.seed, 0))
    seed_split, seed_train_q, seed_test_q, _ = seq.spawn(4)
    train_rows, test_rows = split(table, args.test_fraction, seed_split)
    train_rows, test_rows, _scaler = standardize(train_rows, test_rows)
    train_tasks = make_ranking_problems(train_rows, args.n_train, args.m,
                                        args.p_rel, seed_train_q)
    test_tasks = make_ranking_problems(test_rows, args.n_test, args.m,
                                       args.p_rel, seed_test_q)
    save_task_set(train_tasks, os.path.join(args.out, "train"))
    save_task_set(test_tasks, os.path.join(args.out, "test"))
    print(f"wrote {len(train_tasks)} train and {len(test_tasks)} test queries "
          f"under {args.out}")
    return 0


def _cmd_train(args) -> int:
    tasks = load_task_set(args.data)
    hp = Hyperparams(lam=args.lam, gamma=args.gamma, mu=args.mu,
                     solver=fast_solver_profile(outer_max_iter=args.max_iter))
    result = train(list(tasks.problems), hp, args.seed)
    save_model(result.params, args.out)
    status = "converged" if result.converged else "iteration cap reached"
    print(f"trained on {len(tasks)} queries in {result.iterations} iterations "
          f"({status}); model written to {args.out}")
    return 0


def _cmd_infer(args) -> int:
    params = load_model(args.model)
    tasks = load_task_set(args.data)
    inputs = [strip_relevance(p) for p in tasks.problems]
    results = infer_batch(inputs, params)
    os.makedirs(args.out, exist_ok=True)
    bias = PositionBias.for_items(tasks.n_items)
    with open(os.path.join(args.out, "rankings.tsv"), "w", encoding="utf-8") as fh:
        fh.write("query_id\tpositions\n")
        for prob, res in zip(tasks.problems, results):
            fh.write(prob.query_id + "\t"
                     + " ".join(str(p) for p in res.ranking.positions) + "\n")
    nd, dps = [], []
    for prob, res in zip(tasks.problems, results):
        nd.append(ndcg(prob.relevance, res.ranking))
        d = dp_violation(res.P_star, prob.groups, bias)
        if d is not None:
            dps.append(d)
    with open(os.path.join(args.out, "metrics.tsv"), "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\n")
        fh.write(f"ndcg_mean\t{np.mean(nd)!r}\n")
        fh.write(f"dp_mean\t{np.mean(dps)!r}\n")
    print(f"wrote rankings and metrics for {len(tasks)} queries under {args.out}"
          f" (ndcg={np.mean(nd):.4f}, dp={np.mean(dps):.4f})")
    return 0


def _cmd_sweep(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = parse_config(fh.read())
    else:
        config = ExperimentConfig()
    overrides = {}
    if args.dataset:
        overrides["dataset"] = args.dataset
    if args.out:
        overrides["out"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.method:
        overrides["methods"] = tuple(args.method)
    if args.lam is not None:
        overrides["robust_lambdas"] = (args.lam,)
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if overrides:
        config = replace(config, **overrides)
    if not config.dataset:
        raise ConfigError("no dataset given (config key 'dataset' or --dataset)")
    rows, aggregate, failures = run_sweep(config)
    print(f"{len(rows)} result rows -> {config.out}/results.tsv")
    for msg in failures:
        print(f"FAILED: {msg}", file=sys.stderr)
    return 1 if failures else 0


def _cmd_report(args) -> int:
    path = os.path.join(args.results, "aggregate.tsv")
    if not os.path.exists(path):
        raise ConfigError(f"no aggregate.tsv under {args.results}")
    aggregate = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split("\t")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            row = dict(zip(header, parts))
            for key in ("lambda", "ndcg_mean", "ndcg_ci", "dp_mean", "dp_ci"):
                row[key] = float(row[key])
            aggregate.append(row)
    report = write_report(aggregate, os.path.join(args.results, "report.tsv"))
    for row in report:
        print(f"{row['method']:>10s}: fairest at lambda={row['lambda']:g} "
              f"ndcg={row['ndcg_mean']:.3f}+/-{row['ndcg_ci']:.3f} "
              f"dp={row['dp_mean']:.3f}+/-{row['dp_ci']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairrank",
        description="Fairness-constrained robust learning-to-rank.",
        epilog=_CONFIG_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build task sets from a CSV")
    p.add_argument("--dataset", required=True,
                   help="CSV path or stand-in name (adult/compas/german)")
    p.add_argument("--schema", default="", help="schema path or packaged name")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=500, dest="n_train")
    p.add_argument("--n-test", type=int, default=100, dest="n_test")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--p-rel", type=float, default=0.4, dest="p_rel")
    p.add_argument("--test-fraction", type=float, default=0.2,
                   dest="test_fraction")
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("train", help="train the robust ranker on a task set")
    p.add_argument("--data", required=True, help="task-set directory")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--lambda", type=float, default=0.0, dest="lam")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--max-iter", type=int, default=400, dest="max_iter")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="rank a task set with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="task-set directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("sweep", help="run the repeated lambda sweep")
    p.add_argument("--config", default="", help="flat key-value config file")
    p.add_argument("--dataset", default="")
    p.add_argument("--out", default="")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--method", action="append",
                   choices=("robust", "post_proc", "random"),
                   help="restrict to a method (repeatable)")
    p.add_argument("--lambda", type=float, default=None, dest="lam",
                   help="restrict the robust sweep to one penalty")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="fairest-point table from sweep output")
    p.add_argument("--results", required=True, help="sweep output directory")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError,) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FairrankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
