"""Minimax training: adversary beliefs vs. probabilistic ranker.

The saddle problem per training set is

    min_{q in [0,1]^M per query}  max_theta  (1/N) sum_i [
        max_{P in Birkhoff} q' P v - <q - u, X theta>
        + fairness penalty - (mu/2)||P||_F^2 + (mu/2)||q||^2
    ] - (gamma/2)||theta||^2

theta has a closed form given the beliefs, and each query's inner ranking
problem is a Euclidean projection onto the doubly-stochastic set, so the
outer loop is plain projected gradient descent on the beliefs with an
Armijo backtracking line search; the envelope theorem supplies exact
gradients at the inner maximizers.

Fairness enters as a soft parity penalty -(lam/2) (f' P v)^2 where f is
each query's signed group-difference vector, so f' P v is the signed
exposure disparity between the two groups.  Rather than solving that
quadratic directly, each query carries a scalar multiplier alpha with the
conjugate form

    -(lam/2) (f'Pv)^2 = min_alpha  -alpha f'Pv + alpha^2 / (2 lam),

which keeps the inner ranking solve a pure projection of (q - alpha f) v'
/ mu and makes the whole outer problem jointly convex in (q, alpha).  At
stationarity alpha = lam * (f'Pv): the exposure correction is proportional
to the current violation, so large lam drives the disparity toward zero
instead of overshooting, and the sign of alpha orients the boost toward
whichever group is currently disadvantaged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import (AdversaryBelief, DoublyStochasticMatrix, ModelParams,
                   PositionBias, RankingProblem, SolverSettings,
                   fast_solver_profile)
from .errors import ConvergenceError, InvalidInputError
from .fairness import build_fairness_vector
from .kernels import ds_project_batch

__all__ = [
    "Hyperparams",
    "TrainResult",
    "theta_star",
    "solve_p_star",
    "q_objective_grad",
    "train",
    "cross_validate",
]


@dataclass(frozen=True)
class Hyperparams:
    lam: float = 0.0
    gamma: float = 1.0
    mu: float = 0.1
    # Units of the quadratic parity penalty: the effective weight is
    # lam_scale * lam, calibrated once so the conventional sweep range
    # lam in [0, 10] spans "no fairness force" to "disparity pinned near
    # its floor" on the benchmark protocol.
    lam_scale: float = 3.0
    solver: SolverSettings = field(default_factory=fast_solver_profile)
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    step_grow: float = 2.0
    step_init: float = 1.0
    step_floor: float = 1e-3  # keeps solver noise from collapsing BB steps
    max_backtracks: int = 40

    def __post_init__(self):
        if self.gamma <= 0 or self.mu <= 0 or self.lam < 0:
            raise InvalidInputError("require gamma > 0, mu > 0, lambda >= 0")


@dataclass
class TrainResult:
    params: ModelParams
    converged: bool
    iterations: int
    objective_trace: list
    pg_residual: float
    beliefs: np.ndarray  # (N, M) final adversary beliefs
    p_stars: np.ndarray  # (N, M, M) final per-query rankings


# ---------------------------------------------------------------------------
# Batched query representation


@dataclass
class QueryBatch:
    """Stacked per-query arrays; all queries share the same item count."""

    X: np.ndarray  # (N, M, L)
    groups: np.ndarray  # (N, M)
    v: np.ndarray  # (M,)
    u: np.ndarray | None = None  # (N, M) true relevance; absent at test time
    mask_lo: np.ndarray | None = None  # membership of the smaller group label
    active: np.ndarray | None = None  # queries with exactly two groups

    def __post_init__(self):
        n, m, _ = self.X.shape
        mask_lo = np.zeros((n, m), dtype=bool)
        active = np.zeros(n, dtype=bool)
        for i in range(n):
            labels = np.unique(self.groups[i])
            if labels.size == 2:
                mask_lo[i] = self.groups[i] == labels[0]
                active[i] = True
            elif labels.size > 2:
                raise InvalidInputError("at most two groups are supported")
        self.mask_lo = mask_lo
        self.active = active

    @property
    def n_queries(self) -> int:
        return self.X.shape[0]


def build_batch(problems, with_relevance: bool = True) -> QueryBatch:
    """Stack queries and append the intercept feature.

    The constant column makes the adversary match the total relevance mass
    alongside the feature moments; without it the beliefs cannot be mean
    calibrated against the exposure scale and most of them pin at zero.
    The trained dual weights therefore carry one extra entry (the
    intercept dual) after the L feature weights.
    """
    if not problems:
        raise InvalidInputError("empty dataset")
    m = problems[0].features.shape[0]
    ell = problems[0].features.shape[1]
    for p in problems:
        if p.features.shape != (m, ell):
            raise InvalidInputError("all queries must share item and feature counts")
    x = np.stack([np.column_stack([p.features, np.ones(m)]) for p in problems])
    groups = np.stack([np.asarray(p.groups) for p in problems])
    u = np.stack([p.relevance for p in problems]) if with_relevance else None
    v = PositionBias.for_items(m).values
    return QueryBatch(X=x, groups=groups, v=v, u=u)


def _parity_vectors(batch: QueryBatch) -> np.ndarray:
    """Signed group-difference vectors, one row per query.

    Row i has +1/|G_lo| on the smaller group label and -1/|G_hi| on the
    other, so f_i' P v is exactly the signed exposure disparity whose
    absolute value is the demographic-parity metric.  Orientation toward
    the currently disadvantaged group is carried by the sign of each
    query's multiplier, so the quadratic penalty is unaffected by the
    fixed sign convention.  Queries without two groups get a zero row.
    """
    lo = batch.mask_lo
    hi = ~lo & batch.active[:, None]
    f = np.zeros(lo.shape)
    cnt_lo = np.maximum(lo.sum(axis=1), 1)
    cnt_hi = np.maximum(hi.sum(axis=1), 1)
    f[lo] = np.repeat(1.0 / cnt_lo, lo.sum(axis=1))
    f[hi] = np.repeat(-1.0 / cnt_hi, hi.sum(axis=1))
    f[~batch.active] = 0.0
    return f


# ---------------------------------------------------------------------------
# Single-query operations (reference API; the loop below uses batched forms)


def theta_star(beliefs, dataset, gamma: float) -> np.ndarray:
    """Closed-form dual weights: theta_l = -(1/(gamma N)) sum_i <q_i - u_i, X_i[:, l]>."""
    if not dataset:
        raise InvalidInputError("empty dataset")
    if gamma <= 0:
        raise InvalidInputError("gamma must be positive")
    n = len(dataset)
    acc = np.zeros(dataset[0].n_features)
    for belief, prob in zip(beliefs, dataset):
        q = belief.q if isinstance(belief, AdversaryBelief) else np.asarray(belief, float)
        acc += prob.features.T @ (q - prob.relevance)
    return -acc / (gamma * n)


def solve_p_star(q, f, bias: PositionBias, lam: float, mu: float,
                 settings: SolverSettings | None = None) -> DoublyStochasticMatrix:
    """Optimal ranking for fixed belief and fairness vector.

    argmax_{P in Birkhoff} q'Pv + lam f'Pv - (mu/2)||P||_F^2, computed as the
    projection of (q + lam f) v' / mu onto the doubly-stochastic set.
    """
    if mu <= 0:
        raise InvalidInputError("mu must be positive")
    qv = np.asarray(q, dtype=float)
    fv = np.asarray(f, dtype=float)
    if qv.shape != fv.shape or qv.size != len(bias):
        raise InvalidInputError("q, f, and bias must have matching lengths")
    r = np.outer(qv + lam * fv, bias.values) / mu
    out, _ = ds_project_batch(r[None], settings or SolverSettings())
    return DoublyStochasticMatrix(out[0])


def q_objective_grad(q, problem: RankingProblem, theta, f, bias: PositionBias,
                     lam: float, mu: float,
                     settings: SolverSettings | None = None):
    """Value and gradient of one query's inner objective at fixed theta and f.

    value = q'P*v - <q - u, X theta> + lam f'P*v - (mu/2)||P*||^2 + (mu/2)||q||^2
    grad  = P*v - X theta + mu q      (envelope theorem at the inner maximizer)
    """
    qv = np.asarray(q, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if qv.size != problem.n_items or theta.size != problem.n_features:
        raise InvalidInputError("dimension mismatch")
    p = solve_p_star(qv, f, bias, lam, mu, settings).entries
    e = p @ bias.values
    score = problem.features @ theta
    value = (qv @ e - (qv - problem.relevance) @ score
             + lam * np.asarray(f, float) @ e
             - 0.5 * mu * np.sum(p * p) + 0.5 * mu * qv @ qv)
    grad = e - score + mu * qv
    return float(value), grad


# ---------------------------------------------------------------------------
# The outer solver, shared by training and inference


class _Objective:
    """Total objective and gradients over a batch at frozen fairness vectors."""

    def __init__(self, batch: QueryBatch, hp: Hyperparams, theta_frozen=None,
                 inner_settings: SolverSettings | None = None):
        self.batch = batch
        self.hp = hp
        self.theta_frozen = theta_frozen
        self.settings = inner_settings or hp.solver
        self.training = theta_frozen is None
        self.lam_eff = hp.lam * hp.lam_scale
        if self.training and batch.u is None:
            raise InvalidInputError("training requires relevance labels")

    def theta_of(self, q: np.ndarray) -> np.ndarray:
        if not self.training:
            return self.theta_frozen
        b = np.einsum("nml,nm->l", self.batch.X, q - self.batch.u)
        return -b / (self.hp.gamma * self.batch.n_queries)

    def __call__(self, q, alpha, f, state):
        hp, batch = self.hp, self.batch
        v = batch.v
        s_eff = q - alpha[:, None] * f
        r = (s_eff[:, :, None] * v[None, None, :]) / hp.mu
        p, state = ds_project_batch(r, self.settings, state)
        e = p @ v
        util = np.sum(q * e, axis=1)
        fgap = np.sum(f * e, axis=1)
        pnorm = np.sum(p * p, axis=(1, 2))
        theta = self.theta_of(q)
        score = self.batch.X @ theta
        if self.training:
            moment = np.sum((q - batch.u) * score, axis=1)
        else:
            moment = np.sum(q * score, axis=1)
        bracket = (util - moment - alpha * fgap
                   - 0.5 * hp.mu * pnorm + 0.5 * hp.mu * np.sum(q * q, axis=1))
        if hp.lam > 0:
            bracket = bracket + alpha ** 2 / (2.0 * self.lam_eff)
        total = bracket.sum()
        if self.training:
            total -= batch.n_queries * 0.5 * hp.gamma * float(theta @ theta)
        if not np.isfinite(total):
            raise ConvergenceError("objective became non-finite")
        grad_q = e - score + hp.mu * q
        if hp.lam > 0:
            grad_a = np.where(batch.active, -fgap + alpha / self.lam_eff, 0.0)
        else:
            grad_a = np.zeros(batch.n_queries)
        return total, grad_q, grad_a, p, state, theta, fgap


@dataclass
class _LoopResult:
    q: np.ndarray
    alpha: np.ndarray
    p: np.ndarray
    theta: np.ndarray
    converged: bool
    iterations: int
    trace: list
    pg_residual: float


def _descend(objective: _Objective, q, alpha, f, state, budget, trace):
    """Monotone projected gradient descent on (q, alpha) at frozen f.

    Steps start from a Barzilai-Borwein estimate of the previous accepted
    step (a cheap quasi-Newton surrogate) and backtrack under an Armijo
    test.  Returns the iterate, its evaluation, iterations used, and the
    projected-gradient residual.
    """
    hp = objective.hp
    eta = hp.step_init
    prev_point = None
    base = None
    used = 0
    converged = False
    res = np.inf
    while True:
        if base is None:
            base = objective(q, alpha, f, state)
        total, gq, ga, p, state, theta, _ = base
        trace.append(total / objective.batch.n_queries)
        pg_q = q - np.clip(q - gq, 0.0, 1.0)
        res = max(float(np.abs(pg_q).max()),
                  float(np.abs(ga).max()) if hp.lam > 0 else 0.0)
        if res < hp.solver.outer_tol:
            converged = True
            break
        if used >= budget:
            break
        used += 1
        if prev_point is not None:
            dx = np.concatenate([(q - prev_point[0]).ravel(),
                                 alpha - prev_point[1]])
            dg = np.concatenate([(gq - prev_point[2]).ravel(),
                                 ga - prev_point[3]])
            denom = float(dx @ dg)
            if denom > 1e-300:
                eta = float(np.clip(dx @ dx / denom, hp.step_floor, 1e6))
            else:
                eta = min(eta * hp.step_grow, 1e6)
        prev_point = (q, alpha, gq, ga)
        accepted = False
        for _ in range(hp.max_backtracks):
            q_t = np.clip(q - eta * gq, 0.0, 1.0)
            a_t = alpha - eta * ga
            move = float(np.sum((q_t - q) ** 2) + np.sum((a_t - alpha) ** 2))
            if move == 0.0:
                break
            trial = objective(q_t, a_t, f, state)
            if trial[0] <= total - hp.armijo_c / eta * move:
                q, alpha = q_t, a_t
                state = trial[4]
                base = trial  # f is frozen here, so the evaluation is reusable
                accepted = True
                break
            eta *= hp.backtrack
        if not accepted:
            break  # no descent possible at this precision
    return q, alpha, base, state, used, converged, res


def _minimize_beliefs(objective: _Objective, seed=None) -> _LoopResult:
    """Solve the belief/multiplier minimization for a batch of queries.

    The parity vectors are constants of each query's group structure, so
    the whole problem is jointly convex in (q, alpha) and one descent
    reaches the saddle beliefs, the per-query multipliers, and (in
    training mode) the closed-form dual weights together.
    """
    batch, hp = objective.batch, objective.hp
    n, m = batch.n_queries, batch.v.size
    q = np.full((n, m), 0.5)
    alpha = np.zeros(n)
    f = _parity_vectors(batch) if hp.lam > 0 else np.zeros((n, m))
    trace = []
    q, alpha, base, state, used, converged, res = _descend(
        objective, q, alpha, f, None, hp.solver.outer_max_iter, trace)
    total, _, _, p, _, theta, _ = base
    return _LoopResult(q=q, alpha=alpha, p=p, theta=theta, converged=converged,
                       iterations=used, trace=trace, pg_residual=float(res))


def train(dataset, hyperparams: Hyperparams, seed=None) -> TrainResult:
    """Fit dual weights by alternating belief descent and closed-form theta.

    Deterministic: the belief initialization is fixed, so the seed only
    matters for callers that resample data.  Returns the best iterate with
    converged=False when the iteration cap is hit.
    """
    batch = build_batch(dataset, with_relevance=True)
    objective = _Objective(batch, hyperparams)
    out = _minimize_beliefs(objective, seed)
    params = ModelParams(theta=out.theta, lam=hyperparams.lam,
                         gamma=hyperparams.gamma, mu=hyperparams.mu,
                         solver=hyperparams.solver)
    return TrainResult(params=params, converged=out.converged,
                       iterations=out.iterations, objective_trace=out.trace,
                       pg_residual=out.pg_residual, beliefs=out.q,
                       p_stars=out.p)


def cross_validate(dataset, gamma_grid, mu_grid, folds: int, lam: float,
                   hyperparams: Hyperparams | None = None):
    """Pick (gamma, mu) by held-out NDCG over query-level folds.

    Folds are contiguous splits of the query list.  Ties prefer the smaller
    gamma, then the smaller mu.
    """
    from .inference import infer_batch, strip_relevance  # cycle at import time
    from .core import ndcg as ndcg_metric

    if folds < 2:
        raise InvalidInputError("need at least 2 folds")
    if not gamma_grid or not mu_grid:
        raise InvalidInputError("empty hyperparameter grid")
    if len(dataset) < folds:
        raise InvalidInputError("dataset smaller than fold count")
    hp0 = hyperparams or Hyperparams()
    fold_idx = np.array_split(np.arange(len(dataset)), folds)
    best = None
    for gamma in sorted(set(gamma_grid)):
        for mu in sorted(set(mu_grid)):
            hp = replace(hp0, lam=lam, gamma=gamma, mu=mu)
            scores = []
            for held in fold_idx:
                held_set = set(held.tolist())
                train_part = [p for i, p in enumerate(dataset) if i not in held_set]
                test_part = [dataset[i] for i in held]
                result = train(train_part, hp)
                inferred = infer_batch([strip_relevance(p) for p in test_part],
                                       result.params)
                scores.extend(ndcg_metric(p.relevance, r.ranking)
                              for p, r in zip(test_part, inferred))
            mean_score = float(np.mean(scores))
            if best is None or mean_score > best[0] + 1e-12:
                best = (mean_score, gamma, mu)
    return best[1], best[2]
