import numpy as np
import pytest

from fairrank.core import DoublyStochasticMatrix, Permutation, RankingProblem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_ds_matrix(rng, m, n_perms=None):
    """Exactly doubly stochastic: a Dirichlet mixture of random permutations."""
    k = n_perms or (2 * m)
    weights = rng.dirichlet(np.ones(k))
    out = np.zeros((m, m))
    for w in weights:
        perm = rng.permutation(m)
        out[np.arange(m), perm] += w
    return out


def random_problem(rng, m=5, ell=3, query_id="q"):
    rel = rng.integers(0, 2, size=m)
    if rel.sum() == 0:
        rel[rng.integers(m)] = 1
    return RankingProblem(
        features=rng.normal(size=(m, ell)),
        relevance=rel,
        groups=rng.integers(0, 2, size=m),
        query_id=query_id,
    )


def permutation_from_scores(scores):
    order = np.argsort(-np.asarray(scores), kind="stable")
    pos = np.empty(len(scores), dtype=int)
    pos[order] = np.arange(1, len(scores) + 1)
    return Permutation(pos)
