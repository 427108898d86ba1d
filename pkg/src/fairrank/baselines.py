"""Comparison methods: ridge regression with fair re-ranking, and a
random ranker.

The re-ranker mirrors the post-processing recipe: predict relevance with
a linear model fitted on all training query-items, then rank each test
query by projecting (u_hat + lam * f) v' / mu onto the doubly-stochastic
set, where f is the fairness vector built from the clipped predictions.
At lam = 0 this reduces to sorting by predicted relevance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AdversaryBelief, DoublyStochasticMatrix, Permutation, PositionBias
from .errors import InvalidInputError
from .fairness import build_fairness_vector
from .inference import InferenceResult, rank_deterministic
from .kernels import ds_project_batch
from .core import fast_solver_profile

POST_PROC_SMOOTHING = 1e-2


@dataclass(frozen=True)
class RegressionModel:
    weights: np.ndarray
    intercept: float
    ridge: float

    def predict(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights + self.intercept


def ridge_fit(task_set, ridge: float = 1e-6) -> RegressionModel:
    """Least squares of relevance on features over all training items.

    Closed-form normal equations with an unpenalized intercept.
    """
    problems = list(getattr(task_set, "problems", task_set))
    if not problems:
        raise InvalidInputError("need at least one training query")
    x = np.concatenate([p.features for p in problems])
    y = np.concatenate([p.relevance for p in problems])
    n, ell = x.shape
    a = np.column_stack([x, np.ones(n)])
    gram = a.T @ a
    gram[np.arange(ell), np.arange(ell)] += ridge
    try:
        coef = np.linalg.solve(gram, a.T @ y)
    except np.linalg.LinAlgError:
        raise InvalidInputError(
            "normal equations are singular; use a nonzero ridge penalty"
        ) from None
    if not np.all(np.isfinite(coef)):
        raise InvalidInputError(
            "normal equations are ill-conditioned; use a larger ridge penalty")
    return RegressionModel(weights=coef[:-1], intercept=float(coef[-1]),
                           ridge=ridge)


def post_process_rank(predicted_utilities, groups, lam: float, mu: float,
                      bias: PositionBias) -> InferenceResult:
    """Fairness-penalized re-ranking of precomputed relevance predictions."""
    u_hat = np.asarray(predicted_utilities, dtype=float)
    if not np.all(np.isfinite(u_hat)):
        raise InvalidInputError("predictions must be finite")
    u_clip = np.clip(u_hat, 0.0, 1.0)
    fv = build_fairness_vector(AdversaryBelief(u_clip), groups, bias)
    r = np.outer(u_clip + lam * fv.f, bias.values) / mu
    out, _ = ds_project_batch(r[None], fast_solver_profile())
    p_star = DoublyStochasticMatrix(out[0])
    return InferenceResult(
        P_star=p_star,
        ranking=rank_deterministic(p_star),
        adversary_belief=AdversaryBelief(u_clip),
        diagnostics={"method": "post_proc", "lam": lam, "mu": mu},
    )


def random_rank(m: int, seed) -> Permutation:
    """Uniform random permutation of m items."""
    if m < 1:
        raise InvalidInputError("need at least one item")
    rng = np.random.default_rng(seed)
    return Permutation(rng.permutation(m) + 1)
