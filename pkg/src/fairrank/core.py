"""Domain types and ranking metrics.

Conventions used throughout the package:

- A ranking of M items is a 1-based position vector: ``positions[j]`` is the
  rank of item j (1 = top).
- Position k carries a discount ("position bias") of 1/log2(1+k), so rank 1
  has weight exactly 1.  Base-2 logs are used for both the bias vector and
  DCG so that utility and exposure live on the same scale.
- A probabilistic ranking is a doubly-stochastic matrix P where P[j, k] is
  the probability of placing item j at rank k+1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

# Feasibility tolerances for the doubly-stochastic set.
DS_ENTRY_TOL = 1e-9
DS_SUM_TOL = 1e-6


def _as_float_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-d vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class PositionBias:
    """Discount vector v with v[k] = 1/log2(1+k) for 1-based rank k."""

    values: np.ndarray

    def __post_init__(self):
        v = _as_float_vector(self.values, "position bias")
        if v.size == 0 or not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidInputError("position bias must be positive and finite")
        if abs(v[0] - 1.0) > 1e-12 or np.any(np.diff(v) >= 0):
            raise InvalidInputError("position bias must start at 1 and strictly decrease")
        object.__setattr__(self, "values", v)

    @classmethod
    def for_items(cls, m: int) -> "PositionBias":
        k = np.arange(1, m + 1)
        return cls(1.0 / np.log2(1.0 + k))

    @property
    def mean(self) -> float:
        """Average discount over all ranks (the parity target for exposures)."""
        return float(self.values.mean())

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Permutation:
    """1-based position vector: positions[j] = rank of item j."""

    positions: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=int)
        if p.ndim != 1 or p.size == 0:
            raise InvalidInputError("permutation must be a non-empty 1-d vector")
        if not np.array_equal(np.sort(p), np.arange(1, p.size + 1)):
            raise InvalidInputError("positions must be a bijection on 1..M")
        object.__setattr__(self, "positions", p)

    @classmethod
    def identity(cls, m: int) -> "Permutation":
        return cls(np.arange(1, m + 1))

    def matrix(self) -> np.ndarray:
        """Permutation matrix with entry (j, positions[j]-1) = 1."""
        m = self.positions.size
        mat = np.zeros((m, m))
        mat[np.arange(m), self.positions - 1] = 1.0
        return mat

    def items_by_rank(self) -> np.ndarray:
        """Item indices from top rank to bottom."""
        return np.argsort(self.positions)

    def __len__(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class DoublyStochasticMatrix:
    """Square nonnegative matrix with unit row and column sums.

    Construction clips entries within DS_ENTRY_TOL of [0, 1] and rejects
    anything farther out, or any row/column sum off by more than DS_SUM_TOL.
    """

    entries: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.entries, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("matrix has non-finite entries")
        if p.min() < -DS_ENTRY_TOL or p.max() > 1.0 + DS_ENTRY_TOL:
            raise InvalidInputError("entries outside [0, 1] beyond tolerance")
        p = np.clip(p, 0.0, 1.0)
        row_err = np.abs(p.sum(axis=1) - 1.0).max()
        col_err = np.abs(p.sum(axis=0) - 1.0).max()
        if max(row_err, col_err) > DS_SUM_TOL:
            raise InvalidInputError(
                f"row/column sums deviate from 1 by {max(row_err, col_err):.3g}"
            )
        object.__setattr__(self, "entries", p)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class AdversaryBelief:
    """Per-item relevance probabilities chosen by the minimizing player."""

    q: np.ndarray

    def __post_init__(self):
        q = _as_float_vector(self.q, "belief")
        if np.any(q < 0) or np.any(q > 1) or not np.all(np.isfinite(q)):
            raise InvalidInputError("belief entries must lie in [0, 1]")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class RankingProblem:
    """One query: item features, binary relevance, and group membership."""

    features: np.ndarray  # (M, L)
    relevance: np.ndarray  # (M,) in {0, 1}
    groups: np.ndarray  # (M,) integer group ids
    query_id: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        u = np.asarray(self.relevance)
        g = np.asarray(self.groups, dtype=int)
        if x.ndim != 2:
            raise InvalidInputError("features must be an M x L matrix")
        m = x.shape[0]
        if u.shape != (m,) or g.shape != (m,):
            raise InvalidInputError("relevance/groups length must match item count")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("features contain non-finite values")
        if not np.all(np.isin(u, (0, 1))):
            raise InvalidInputError("relevance must be binary")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "relevance", u.astype(float))
        object.__setattr__(self, "groups", g)

    @property
    def n_items(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SolverSettings:
    """Iteration caps and tolerances for the projection and outer solvers."""

    admm_rho: float = 1.0
    admm_tol_abs: float = 1e-6
    admm_tol_rel: float = 1e-4
    admm_max_iter: int = 5000
    # Row/column feasibility enforced on the returned projection. Tighter
    # than the DS invariant so downstream decompositions stay clean.
    admm_feas_tol: float = 1e-8
    # Residual balancing keeps iteration counts stable when projection
    # inputs vary over orders of magnitude (small smoothing parameters).
    admm_adapt_rho: bool = True
    # Performance knobs used by the training loop: scale-aware initial
    # penalty and over-relaxed updates.  Both leave the fixed point (and
    # hence the projection) unchanged; defaults keep the plain updates.
    admm_rho_auto: bool = False
    admm_relax: float = 1.0
    outer_tol: float = 1e-4
    outer_max_iter: int = 300


def fast_solver_profile(**overrides) -> "SolverSettings":
    """Solver settings tuned for the inner loops of training and inference.

    Tighter projection tolerances than the public defaults: the outer
    descent certifies stationarity at 1e-4, which needs gradients an order
    or two cleaner than that.
    """
    base = dict(admm_rho_auto=True, admm_relax=1.8, admm_tol_abs=1e-8,
                admm_tol_rel=1e-6, admm_feas_tol=1e-8)
    base.update(overrides)
    return SolverSettings(**base)


@dataclass(frozen=True)
class ModelParams:
    """Learned dual weights plus the hyperparameters they were trained with."""

    theta: np.ndarray
    lam: float  # fairness penalty weight
    gamma: float  # moment-matching regularization
    mu: float  # smoothing strength
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        theta = _as_float_vector(self.theta, "theta")
        if not np.all(np.isfinite(theta)):
            raise InvalidInputError("theta has non-finite entries")
        if self.gamma <= 0 or self.mu <= 0 or self.lam < 0:
            raise InvalidInputError("require gamma > 0, mu > 0, lambda >= 0")
        object.__setattr__(self, "theta", theta)


# ---------------------------------------------------------------------------
# Metrics


def dcg(relevance, ranking: Permutation) -> float:
    """Discounted cumulative gain: sum of (2^rel - 1)/log2(1 + rank)."""
    rel = _as_float_vector(relevance, "relevance")
    if rel.size != len(ranking):
        raise InvalidInputError("relevance and ranking lengths differ")
    gains = np.power(2.0, rel) - 1.0
    return float(np.sum(gains / np.log2(1.0 + ranking.positions)))


def ideal_dcg(relevance) -> float:
    """DCG of the best possible ranking (relevant items on top)."""
    rel = _as_float_vector(relevance, "relevance")
    order = np.argsort(-rel, kind="stable")
    positions = np.empty(rel.size, dtype=int)
    positions[order] = np.arange(1, rel.size + 1)
    return dcg(rel, Permutation(positions))


def ndcg(relevance, ranking: Permutation) -> float:
    """DCG normalized by the ideal ranking; 0 when nothing is relevant."""
    z = ideal_dcg(relevance)
    if z == 0.0:
        return 0.0
    return dcg(relevance, ranking) / z


def exposure_per_item(p: np.ndarray, bias: PositionBias) -> np.ndarray:
    """Expected discount received by each item: row sums of P * v."""
    return p @ bias.values


def dp_violation(ranking_or_p, groups, bias: PositionBias):
    """Absolute difference of the two groups' average exposures.

    Accepts a Permutation (converted to its permutation matrix) or a
    DoublyStochasticMatrix.  Returns None when fewer than two groups are
    present: disparity is undefined and the query is skipped in averages.
    """
    if isinstance(ranking_or_p, Permutation):
        p = ranking_or_p.matrix()
    elif isinstance(ranking_or_p, DoublyStochasticMatrix):
        p = ranking_or_p.entries
    else:
        raise InvalidInputError("expected a Permutation or DoublyStochasticMatrix")
    g = np.asarray(groups)
    if g.shape != (p.shape[0],):
        raise InvalidInputError("groups length must match item count")
    labels = np.unique(g)
    if labels.size < 2:
        return None
    if labels.size > 2:
        raise InvalidInputError("disparity is defined for exactly two groups")
    expo = exposure_per_item(p, bias)
    means = [expo[g == label].mean() for label in labels]
    return float(abs(means[0] - means[1]))


def expected_utility(p: DoublyStochasticMatrix, q: AdversaryBelief,
                     bias: PositionBias) -> float:
    """Expected ranking utility q' P v under belief q."""
    mat = p.entries
    if q.q.size != mat.shape[0] or len(bias) != mat.shape[1]:
        raise InvalidInputError("dimension mismatch between P, q, and bias")
    return float(q.q @ mat @ bias.values)
