"""Label-free test-time ranking.

Inference replays the training game per query with the dual weights
frozen: the adversary picks beliefs against the learned feature scores,
the ranker solves the same smoothed projection, and the converged P* is
turned into an actual ranking, either deterministically (assignment with
maximum probability mass) or by sampling the Birkhoff-von-Neumann policy.
True relevance never enters: the input type does not carry it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (AdversaryBelief, DoublyStochasticMatrix, ModelParams,
                   Permutation, RankingProblem)
from .errors import InvalidInputError
from .kernels import bvn_decompose, hungarian_max, sample_bvn
from .trainer import Hyperparams, QueryBatch, _Objective, _minimize_beliefs

__all__ = [
    "InferenceInput",
    "InferenceResult",
    "strip_relevance",
    "infer",
    "infer_batch",
    "rank_deterministic",
    "rank_stochastic",
]


@dataclass(frozen=True)
class InferenceInput:
    """Feature matrix and group labels only; relevance is deliberately absent."""

    features: np.ndarray
    groups: np.ndarray
    query_id: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        g = np.asarray(self.groups, dtype=int)
        if x.ndim != 2 or g.shape != (x.shape[0],):
            raise InvalidInputError("features must be M x L with M group labels")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("features contain non-finite values")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "groups", g)


def strip_relevance(problem: RankingProblem) -> InferenceInput:
    return InferenceInput(problem.features, problem.groups, problem.query_id)


@dataclass(frozen=True)
class InferenceResult:
    P_star: DoublyStochasticMatrix
    ranking: Permutation
    adversary_belief: AdversaryBelief
    diagnostics: dict


def infer_batch(problems, params: ModelParams) -> list:
    """Run the frozen-dual game on a batch of queries sharing one item count."""
    if not problems:
        return []
    for p in problems:
        if not isinstance(p, InferenceInput):
            raise InvalidInputError("inference accepts InferenceInput only "
                                    "(build one with strip_relevance)")
    m = problems[0].features.shape[0]
    ell = problems[0].features.shape[1]
    for p in problems:
        if p.features.shape != (m, ell):
            raise InvalidInputError("all queries must share item and feature counts")
    if params.theta.size != ell + 1:
        raise InvalidInputError(
            "theta length must be the feature count plus the intercept dual")
    from .core import PositionBias

    # same intercept augmentation as training
    batch = QueryBatch(
        X=np.stack([np.column_stack([p.features, np.ones(m)])
                    for p in problems]),
        groups=np.stack([p.groups for p in problems]),
        v=PositionBias.for_items(m).values,
        u=None,
    )
    hp = Hyperparams(lam=params.lam, gamma=params.gamma, mu=params.mu,
                     solver=params.solver)
    objective = _Objective(batch, hp, theta_frozen=params.theta)
    out = _minimize_beliefs(objective)
    results = []
    for i, problem in enumerate(problems):
        p_star = DoublyStochasticMatrix(out.p[i])
        results.append(InferenceResult(
            P_star=p_star,
            ranking=rank_deterministic(p_star),
            adversary_belief=AdversaryBelief(np.clip(out.q[i], 0.0, 1.0)),
            diagnostics={
                "iterations": out.iterations,
                "converged": out.converged,
                "pg_residual": out.pg_residual,
            },
        ))
    return results


def infer(problem: InferenceInput, params: ModelParams) -> InferenceResult:
    """Single-query convenience wrapper around infer_batch."""
    return infer_batch([problem], params)[0]


def rank_deterministic(p: DoublyStochasticMatrix) -> Permutation:
    """Assignment maximizing total placed probability mass."""
    return hungarian_max(p.entries)


def rank_stochastic(p: DoublyStochasticMatrix, seed) -> Permutation:
    """One draw from the ranking policy given by the BvN decomposition of P."""
    return sample_bvn(bvn_decompose(p), seed)
