"""Experiment orchestration: repeated sweeps over fairness penalties.

One repeat = one seeded protocol run: split the tabular rows, standardize
on the training side, synthesize 500 training and 100 test queries of 10
candidates, pick (gamma, mu) by 3-fold cross-validation, then train and
evaluate every (method, lambda) cell on the test queries.  Repeats differ
only in their derived seeds; aggregation reports the mean and the
t-distribution 95% confidence half-width across repeats.

Outputs are flat tab-separated tables plus a manifest embedding the full
configuration, so a results directory is reproducible from (config, seed)
alone and identical runs are byte-identical.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .baselines import POST_PROC_SMOOTHING, ridge_fit, random_rank
from .core import (AdversaryBelief, DoublyStochasticMatrix, PositionBias,
                   dp_violation, fast_solver_profile, ndcg)
from .dataprep import (TabularDataset, load_csv, load_schema,
                       make_ranking_problems, split, standardize)
from .errors import ConfigError, FairrankError, InvalidInputError
from .fairness import build_fairness_vector
from .inference import infer_batch, rank_deterministic, strip_relevance
from .kernels import ds_project_batch
from .trainer import Hyperparams, cross_validate, train

ROBUST_LAMBDAS = (0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
POST_PROC_LAMBDAS = (0.0, 0.01, 0.05, 0.1, 0.2)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = ""  # CSV path, or a packaged stand-in name
    schema: str = ""  # schema path or packaged name; defaults to dataset name
    out: str = "results"
    seed: int = 0
    m: int = 10
    n_train: int = 500
    n_test: int = 100
    repeats: int = 10
    folds: int = 3
    p_rel: float = 0.4
    test_fraction: float = 0.2
    methods: tuple = ("robust", "post_proc", "random")
    robust_lambdas: tuple = ROBUST_LAMBDAS
    post_proc_lambdas: tuple = POST_PROC_LAMBDAS
    gamma_grid: tuple = (0.5, 1.0)
    mu_grid: tuple = (0.1, 0.2)
    cv_lambda: float = 0.0
    ridge: float = 1e-6
    # Disparity is measured on the probabilistic ranking policy when a
    # method produces one ("policy"), or always on the served deterministic
    # ranking ("ranking").
    eval_dp_on: str = "policy"
    outer_max_iter: int = 500
    jobs: int = 1

    def __post_init__(self):
        if self.m < 2 or self.n_train < 1 or self.n_test < 1 or self.repeats < 1:
            raise ConfigError("counts must be positive")
        if self.folds < 2:
            raise ConfigError("need at least two folds")
        if not self.methods:
            raise ConfigError("need at least one method")
        for meth in self.methods:
            if meth not in ("robust", "post_proc", "random"):
                raise ConfigError(f"unknown method {meth!r}")
        if not self.gamma_grid or not self.mu_grid:
            raise ConfigError("hyperparameter grids must be non-empty")
        if self.eval_dp_on not in ("policy", "ranking"):
            raise ConfigError("eval_dp_on must be 'policy' or 'ranking'")


_CONFIG_DOC = """\
# Experiment configuration; defaults follow the benchmark protocol.
# dataset         CSV path or stand-in name (adult / compas / german)
# schema          schema path or packaged name; defaults to dataset
# out             output directory
# seed            root seed; repeats derive their own from it
# m               candidates per query (10)
# n_train         training queries per repeat (500)
# n_test          test queries per repeat (100)
# repeats         protocol repetitions (10)
# folds           cross-validation folds (3)
# p_rel           per-slot relevance probability (0.4)
# test_fraction   row-level holdout fraction (0.2)
# methods         comma list of robust, post_proc, random
# robust_lambdas  fairness penalties for the robust method (0..10)
# post_proc_lambdas  penalties for the re-ranking baseline (0..0.2)
# gamma_grid      regularization grid for cross-validation
# mu_grid         smoothing grid for cross-validation
# cv_lambda       fairness penalty used during cross-validation (0)
# ridge           ridge penalty of the baseline regression
# eval_dp_on      policy | ranking (which object disparity is measured on)
# outer_max_iter  belief-descent iteration budget
# jobs            parallel repeat workers
"""

_TUPLE_KEYS = {"robust_lambdas", "post_proc_lambdas", "gamma_grid", "mu_grid"}
_INT_KEYS = {"seed", "m", "n_train", "n_test", "repeats", "folds",
             "outer_max_iter", "jobs"}
_FLOAT_KEYS = {"p_rel", "test_fraction", "cv_lambda", "ridge"}


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _TUPLE_KEYS:
            values[key] = tuple(float(v) for v in value.split(",") if v.strip())
        elif key == "methods":
            values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        elif key in ("dataset", "schema", "out", "eval_dp_on"):
            values[key] = value
        else:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_text(config: ExperimentConfig) -> str:
    """Render a config back to its flat key-value form (manifest payload)."""
    lines = []
    for key in ("dataset", "schema", "out", "seed", "m", "n_train", "n_test",
                "repeats", "folds", "p_rel", "test_fraction", "methods",
                "robust_lambdas", "post_proc_lambdas", "gamma_grid", "mu_grid",
                "cv_lambda", "ridge", "eval_dp_on", "outer_max_iter", "jobs"):
        value = getattr(config, key)
        if isinstance(value, tuple):
            value = ", ".join(repr(v) if isinstance(v, float) else str(v)
                              for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def aggregate_ci(values) -> tuple:
    """Mean and 95% t-interval half-width of a sample."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size < 2:
        raise InvalidInputError("need at least two values for an interval")
    mean = float(arr.mean())
    sem = float(arr.std(ddof=1) / np.sqrt(arr.size))
    halfwidth = float(stats.t.ppf(0.975, arr.size - 1) * sem)
    return mean, halfwidth


# ---------------------------------------------------------------------------
# Single-repeat execution


@dataclass
class CellResult:
    method: str
    lam: float
    repeat: int
    ndcg: float
    dp: float
    info: str = ""


def _evaluate(results, problems, bias: PositionBias, eval_dp_on: str):
    """Mean NDCG of served rankings and mean disparity per the DP policy."""
    nd, dps = [], []
    for prob, res in zip(problems, results):
        nd.append(ndcg(prob.relevance, res.ranking))
        target = res.P_star if eval_dp_on == "policy" else res.ranking
        d = dp_violation(target, prob.groups, bias)
        if d is not None:
            dps.append(d)
    if not dps:
        raise InvalidInputError("no query had both groups present")
    return float(np.mean(nd)), float(np.mean(dps))


def _post_process_batch(models_predictions, groups_list, lam, bias):
    """Batched version of the re-ranking baseline for one lambda."""
    from .inference import InferenceResult

    rows = []
    beliefs = []
    for u_hat, groups in zip(models_predictions, groups_list):
        u_clip = np.clip(u_hat, 0.0, 1.0)
        fv = build_fairness_vector(AdversaryBelief(u_clip), groups, bias)
        rows.append(np.outer(u_clip + lam * fv.f, bias.values)
                    / POST_PROC_SMOOTHING)
        beliefs.append(u_clip)
    out, _ = ds_project_batch(np.stack(rows), fast_solver_profile())
    results = []
    for i in range(len(rows)):
        p_star = DoublyStochasticMatrix(out[i])
        results.append(InferenceResult(
            P_star=p_star, ranking=rank_deterministic(p_star),
            adversary_belief=AdversaryBelief(beliefs[i]),
            diagnostics={"method": "post_proc", "lam": lam}))
    return results


def run_repeat(config: ExperimentConfig, table: TabularDataset, repeat: int):
    """All (method, lambda) cells for one protocol repetition."""
    seq = np.random.SeedSequence((config.seed, repeat))
    seed_split, seed_train_q, seed_test_q, seed_rand = seq.spawn(4)
    train_rows, test_rows = split(table, config.test_fraction, seed_split)
    train_rows, test_rows, _scaler = standardize(train_rows, test_rows)
    train_tasks = make_ranking_problems(train_rows, config.n_train, config.m,
                                        config.p_rel, seed_train_q)
    test_tasks = make_ranking_problems(test_rows, config.n_test, config.m,
                                       config.p_rel, seed_test_q)
    bias = PositionBias.for_items(config.m)
    test_inputs = [strip_relevance(p) for p in test_tasks.problems]

    solver = fast_solver_profile(outer_max_iter=config.outer_max_iter)
    base_hp = Hyperparams(solver=solver)
    rows, failures = [], []

    gamma, mu = config.gamma_grid[0], config.mu_grid[0]
    need_cv = "robust" in config.methods and (
        len(config.gamma_grid) > 1 or len(config.mu_grid) > 1)
    if need_cv:
        gamma, mu = cross_validate(list(train_tasks.problems),
                                   config.gamma_grid, config.mu_grid,
                                   config.folds, config.cv_lambda, base_hp)

    if "robust" in config.methods:
        for lam in config.robust_lambdas:
            try:
                hp = replace(base_hp, lam=lam, gamma=gamma, mu=mu)
                fit = train(list(train_tasks.problems), hp)
                results = infer_batch(test_inputs, fit.params)
                nd, dp = _evaluate(results, test_tasks.problems, bias,
                                   config.eval_dp_on)
                rows.append(CellResult("robust", lam, repeat, nd, dp,
                                       info=f"gamma={gamma!r} mu={mu!r} "
                                            f"iters={fit.iterations} "
                                            f"converged={fit.converged}"))
            except FairrankError as exc:
                failures.append(f"robust lam={lam!r} repeat={repeat}: {exc}")
    if "post_proc" in config.methods:
        try:
            model = ridge_fit(train_tasks.problems, config.ridge)
            preds = [model.predict(p.features) for p in test_tasks.problems]
            groups_list = [p.groups for p in test_tasks.problems]
            for lam in config.post_proc_lambdas:
                results = _post_process_batch(preds, groups_list, lam, bias)
                nd, dp = _evaluate(results, test_tasks.problems, bias,
                                   config.eval_dp_on)
                rows.append(CellResult("post_proc", lam, repeat, nd, dp))
        except FairrankError as exc:
            failures.append(f"post_proc repeat={repeat}: {exc}")
    if "random" in config.methods:
        try:
            nd, dps = [], []
            child_seeds = seed_rand.spawn(len(test_tasks.problems))
            for prob, child in zip(test_tasks.problems, child_seeds):
                perm = random_rank(config.m, child)
                nd.append(ndcg(prob.relevance, perm))
                d = dp_violation(perm, prob.groups, bias)
                if d is not None:
                    dps.append(d)
            rows.append(CellResult("random", 0.0, repeat,
                                   float(np.mean(nd)), float(np.mean(dps))))
        except FairrankError as exc:
            failures.append(f"random repeat={repeat}: {exc}")
    return rows, failures


def _repeat_worker(args):
    config, table, repeat = args
    return run_repeat(config, table, repeat)


# ---------------------------------------------------------------------------
# Full sweep


def load_table(config: ExperimentConfig) -> TabularDataset:
    from .synthetic import _SPECS, generate_standin

    name = config.dataset
    if name in _SPECS and not os.path.exists(name):
        schema = load_schema(config.schema or name)
        return _table_from_frame(generate_standin(name, seed=config.seed), schema)
    if not name:
        raise ConfigError("config needs a dataset path or stand-in name")
    schema = load_schema(config.schema or name)
    return load_csv(name, schema)


def _table_from_frame(frame, schema):
    import io

    buf = io.StringIO()
    frame.to_csv(buf, index=False)
    buf.seek(0)
    return load_csv(buf, schema)


def run_sweep(config: ExperimentConfig):
    """Execute every repeat and write the results tables.

    Returns (rows, aggregate, failures).  Cell failures are logged and do
    not abort the run; callers map them to a nonzero exit code.
    """
    table = load_table(config)
    jobs = max(1, config.jobs)
    work = [(config, table, r) for r in range(config.repeats)]
    if jobs == 1:
        outcomes = [_repeat_worker(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_repeat_worker, work))
    rows = [row for out, _ in outcomes for row in out]
    failures = [msg for _, fails in outcomes for msg in fails]
    rows.sort(key=lambda r: (r.method, r.lam, r.repeat))
    aggregate = aggregate_rows(rows) if rows else []
    write_outputs(config, rows, aggregate, failures)
    return rows, aggregate, failures


def aggregate_rows(rows):
    cells = {}
    for row in rows:
        cells.setdefault((row.method, row.lam), []).append(row)
    out = []
    for (method, lam), group in sorted(cells.items()):
        nd = [r.ndcg for r in group]
        dp = [r.dp for r in group]
        if len(group) >= 2:
            nd_mean, nd_ci = aggregate_ci(nd)
            dp_mean, dp_ci = aggregate_ci(dp)
        else:
            nd_mean, nd_ci = float(nd[0]), 0.0
            dp_mean, dp_ci = float(dp[0]), 0.0
        out.append({"method": method, "lambda": lam, "repeats": len(group),
                    "ndcg_mean": nd_mean, "ndcg_ci": nd_ci,
                    "dp_mean": dp_mean, "dp_ci": dp_ci})
    return out


def fairest_point(aggregate):
    """Per method, the row minimizing mean disparity, plus a flag on the
    highest-NDCG row whose disparity stays under 0.1."""
    if not aggregate:
        raise InvalidInputError("empty aggregate results")
    by_method = {}
    for row in aggregate:
        by_method.setdefault(row["method"], []).append(row)
    report = []
    for method, group in sorted(by_method.items()):
        fairest = min(group, key=lambda r: (r["dp_mean"], r["lambda"]))
        entry = dict(fairest)
        entry["fairest"] = True
        under = [r for r in group if r["dp_mean"] < 0.1]
        if under:
            best = max(under, key=lambda r: r["ndcg_mean"])
            entry["best_fair_ndcg_lambda"] = best["lambda"]
            entry["best_fair_ndcg"] = best["ndcg_mean"]
        report.append(entry)
    return report


# ---------------------------------------------------------------------------
# File emission


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_outputs(config: ExperimentConfig, rows, aggregate, failures):
    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, "results.tsv"), "w", encoding="utf-8") as fh:
        fh.write("method\tlambda\trepeat\tndcg\tdp\n")
        for r in rows:
            fh.write(f"{r.method}\t{_fmt(r.lam)}\t{r.repeat}\t"
                     f"{_fmt(r.ndcg)}\t{_fmt(r.dp)}\n")
    with open(os.path.join(config.out, "aggregate.tsv"), "w", encoding="utf-8") as fh:
        fh.write("method\tlambda\trepeats\tndcg_mean\tndcg_ci\tdp_mean\tdp_ci\n")
        for row in aggregate:
            fh.write("\t".join(_fmt(row[k]) for k in
                               ("method", "lambda", "repeats", "ndcg_mean",
                                "ndcg_ci", "dp_mean", "dp_ci")) + "\n")
    with open(os.path.join(config.out, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(config_text(config))
    with open(os.path.join(config.out, "diagnostics.log"), "w",
              encoding="utf-8") as fh:
        for r in rows:
            if r.info:
                fh.write(f"{r.method}\tlambda={_fmt(r.lam)}\trepeat={r.repeat}\t"
                         f"{r.info}\n")
        for msg in failures:
            fh.write(f"FAILED\t{msg}\n")


def write_report(aggregate, path):
    report = fairest_point(aggregate)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method\tlambda\tndcg_mean\tndcg_ci\tdp_mean\tdp_ci"
                 "\tbest_fair_ndcg_lambda\tbest_fair_ndcg\n")
        for row in report:
            fh.write("\t".join(_fmt(row.get(k, "")) for k in
                               ("method", "lambda", "ndcg_mean", "ndcg_ci",
                                "dp_mean", "dp_ci", "best_fair_ndcg_lambda",
                                "best_fair_ndcg")) + "\n")
    return report
