"""Numeric kernels: simplex projection, doubly-stochastic projection via
ADMM, maximum-score linear assignment, and Birkhoff-von-Neumann
decomposition of a doubly-stochastic matrix.

The ADMM projection splits the Birkhoff-polytope constraint into a
row-simplex set C1 and a column-simplex set C2 with a consensus constraint
P = S and scaled dual W:

    P <- Proj_C1( (R + rho (S - W)) / (1 + rho) )
    S <- Proj_C2( (R + rho (P + W)) / (1 + rho) )
    W <- W + P - S

Stopping follows the usual primal/dual residual rule, plus a feasibility
check on the returned average (P + S)/2 so callers can rely on tight row
and column sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._admm import admm_loop
from .core import DoublyStochasticMatrix, Permutation, SolverSettings
from .errors import ConvergenceError, InvalidInputError

__all__ = [
    "simplex_project",
    "ds_project",
    "ds_project_batch",
    "hungarian_max",
    "bvn_decompose",
    "sample_bvn",
    "BvnDecomposition",
    "AdmmState",
]


def simplex_project(x) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex.

    Sort-and-threshold method: with u = sorted(x, descending) and
    tau_k = (cumsum(u)_k - 1) / k, the active index is the largest k with
    u_k > tau_k and the projection is max(x - tau, 0).
    """
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError("expected a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("non-finite input")
    return _project_rows(v[None, :])[0]


def _project_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise simplex projection of a stack of vectors (..., n)."""
    n = x.shape[-1]
    u = -np.sort(-x, axis=-1)
    cumsum = np.cumsum(u, axis=-1)
    k = np.arange(1, n + 1, dtype=float)
    taus = (cumsum - 1.0) / k
    active = np.sum(u > taus, axis=-1) - 1
    tau = np.take_along_axis(taus, active[..., None], axis=-1)
    return np.maximum(x - tau, 0.0)


@dataclass
class AdmmState:
    """Splitting iterates for the doubly-stochastic projection.

    P has rows on the simplex, S has columns on the simplex, W is the
    scaled dual.  Arrays are batched: shape (n, m, m).
    """

    P: np.ndarray
    S: np.ndarray
    W: np.ndarray
    rho: float
    iteration: int = 0


def ds_project_batch(r: np.ndarray, settings: SolverSettings | None = None,
                     state: AdmmState | None = None):
    """Project each matrix of a (n, m, m) stack onto the Birkhoff polytope.

    Returns (p, state) where p[i] = (P_i + S_i)/2 clipped to nonnegative;
    averaging treats row and column feasibility symmetrically, and the
    stopping rule keeps the average's row/column sums within
    settings.admm_feas_tol.  Passing the previous state warm-starts the
    splitting variables, which cuts iterations inside optimization loops.
    """
    settings = settings or SolverSettings()
    r = np.ascontiguousarray(r, dtype=float)
    if r.ndim != 3 or r.shape[1] != r.shape[2]:
        raise InvalidInputError(f"expected a (n, m, m) stack, got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise InvalidInputError("non-finite projection input")
    n, m, _ = r.shape
    rho = settings.admm_rho
    if settings.admm_rho_auto:
        # Empirically near-optimal penalty grows like the cube root of the
        # input magnitude; keeps the iteration count flat across scales.
        rho = min(64.0, 2.0 * max(1.0, float(np.abs(r).max())) ** (1.0 / 3.0))
    if state is None:
        s = np.ascontiguousarray(
            _project_rows(r.transpose(0, 2, 1)).transpose(0, 2, 1))
        w = np.zeros_like(r)
    else:
        # The loop mutates its buffers; copy so a state can seed many solves.
        s, w = state.S.copy(), state.W.copy()
        rho = state.rho
    if rho <= 0:
        raise InvalidInputError("rho must be positive")
    if not 1.0 <= settings.admm_relax < 2.0:
        raise InvalidInputError("relaxation must lie in [1, 2)")

    eps_abs = m * settings.admm_tol_abs  # Frobenius dimension sqrt(m*m)
    p, s, w, rho, it, ok, primal, dual = admm_loop(
        r, s, w, rho, eps_abs, settings.admm_tol_rel,
        settings.admm_feas_tol, settings.admm_max_iter, settings.admm_adapt_rho,
        settings.admm_relax)
    if not ok:
        raise ConvergenceError(
            f"ADMM projection did not converge in {settings.admm_max_iter} iterations",
            iterations=it, primal_residual=primal, dual_residual=dual)
    out = np.maximum(0.5 * (p + s), 0.0)
    return out, AdmmState(p, s, w, rho, it)


def ds_project(r, rho: float = 1.0, tol_abs: float = 1e-6,
               tol_rel: float = 1e-4, max_iter: int = 5000) -> DoublyStochasticMatrix:
    """Euclidean projection of a square matrix onto the doubly-stochastic set."""
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {r.shape}")
    settings = SolverSettings(admm_rho=rho, admm_tol_abs=tol_abs,
                              admm_tol_rel=tol_rel, admm_max_iter=max_iter)
    out, _ = ds_project_batch(r[None, :, :], settings)
    return DoublyStochasticMatrix(out[0])


def hungarian_max(score) -> Permutation:
    """Assignment maximizing sum_j score[j, pi_j - 1] over permutations.

    Ties are broken toward the lexicographically smallest position vector:
    item 0 takes the lowest position compatible with optimality, then item 1,
    and so on.
    """
    c = np.asarray(score, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InvalidInputError(f"expected a square score matrix, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("non-finite scores")
    m = c.shape[0]
    best = _assignment_value(c)
    tol = 1e-9 * max(1.0, np.abs(c).max()) * m
    positions = np.zeros(m, dtype=int)
    free_cols = list(range(m))
    fixed_value = 0.0
    sub = c
    for row in range(m):
        for idx, col in enumerate(free_cols):
            candidate = fixed_value + sub[0, idx]
            rest = np.delete(sub[1:], idx, axis=1)
            if rest.size:
                candidate += _assignment_value(rest)
            if candidate >= best - tol:
                positions[row] = col + 1
                fixed_value += sub[0, idx]
                free_cols.pop(idx)
                sub = np.delete(sub[1:], idx, axis=1)
                break
        else:  # pragma: no cover - defensive; cannot happen for finite scores
            raise InvalidInputError("no consistent assignment found")
    return Permutation(positions)


def _assignment_value(c: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(c, maximize=True)
    return float(c[rows, cols].sum())


@dataclass(frozen=True)
class BvnDecomposition:
    """Convex combination of permutations reconstructing a DS matrix."""

    terms: tuple  # of (weight, Permutation)

    def __post_init__(self):
        if not self.terms:
            raise InvalidInputError("empty decomposition")
        weights = np.array([w for w, _ in self.terms])
        if np.any(weights <= 0) or np.any(weights > 1 + 1e-12):
            raise InvalidInputError("weights must lie in (0, 1]")
        if abs(weights.sum() - 1.0) > 1e-8:
            raise InvalidInputError("weights must sum to 1")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.terms])

    def reconstruct(self) -> np.ndarray:
        return sum(w * perm.matrix() for w, perm in self.terms)


def bvn_decompose(p: DoublyStochasticMatrix, tol: float = 1e-9) -> BvnDecomposition:
    """Greedy Birkhoff decomposition of a doubly-stochastic matrix.

    Repeatedly finds a permutation supported on the positive entries of the
    residual (assignment on a support indicator) and peels off the minimum
    entry along it, until the residual mass drops below tol.  Weights are
    normalized at the end so they sum to one exactly.
    """
    residual = p.entries.copy()
    m = residual.shape[0]
    weights = []
    perms = []
    max_terms = m * m - m + 2
    for _ in range(max_terms):
        scale = residual.sum() / m
        if scale < tol:
            break
        support = (residual > min(tol / m, 1e-12)).astype(float)
        perm = hungarian_max(support)
        rows = np.arange(m)
        cols = perm.positions - 1
        if support[rows, cols].sum() < m:  # no perfect matching on support
            break
        w = residual[rows, cols].min()
        if w <= 0:
            break
        weights.append(w)
        perms.append(perm)
        residual[rows, cols] -= w
    if not weights:
        raise InvalidInputError("could not extract any permutation")
    total = sum(weights)
    terms = tuple((w / total, perm) for w, perm in zip(weights, perms))
    return BvnDecomposition(terms)


def sample_bvn(decomp: BvnDecomposition, seed) -> Permutation:
    """Draw one permutation with probability equal to its weight."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(decomp.terms), p=decomp.weights)
    return decomp.terms[idx][1]
