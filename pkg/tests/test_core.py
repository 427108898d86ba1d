import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairrank.core import (AdversaryBelief, DoublyStochasticMatrix,
                           Permutation, PositionBias, RankingProblem, dcg,
                           dp_violation, expected_utility, ideal_dcg, ndcg)
from fairrank.errors import InvalidInputError

from conftest import random_ds_matrix

LOG2_3 = np.log2(3.0)


class TestTypes:
    def test_position_bias_values(self):
        pb = PositionBias.for_items(4)
        assert pb.values[0] == 1.0
        assert np.allclose(pb.values, 1.0 / np.log2(1 + np.arange(1, 5)))
        assert np.all(np.diff(pb.values) < 0)

    def test_permutation_rejects_non_bijection(self):
        with pytest.raises(InvalidInputError):
            Permutation(np.array([1, 1, 3]))

    def test_permutation_matrix(self):
        perm = Permutation(np.array([2, 1, 3]))
        mat = perm.matrix()
        assert mat[0, 1] == 1.0 and mat[1, 0] == 1.0 and mat[2, 2] == 1.0

    def test_ds_matrix_validation(self):
        DoublyStochasticMatrix(np.full((3, 3), 1 / 3))
        with pytest.raises(InvalidInputError):
            DoublyStochasticMatrix(np.array([[0.9, 0.2], [0.1, 0.8]]))
        with pytest.raises(InvalidInputError):
            DoublyStochasticMatrix(np.array([[1.5, -0.5], [-0.5, 1.5]]))

    def test_belief_bounds(self):
        AdversaryBelief(np.array([0.0, 0.5, 1.0]))
        with pytest.raises(InvalidInputError):
            AdversaryBelief(np.array([1.2]))

    def test_ranking_problem_checks(self):
        with pytest.raises(InvalidInputError):
            RankingProblem(np.zeros((3, 2)), [1, 0, 2], [0, 1, 0])
        with pytest.raises(InvalidInputError):
            RankingProblem(np.array([[np.inf], [0.0]]), [1, 0], [0, 1])


class TestDcg:
    def test_top_item_only(self):
        assert dcg([1, 0, 0], Permutation(np.array([1, 2, 3]))) == pytest.approx(1.0)

    def test_zero_relevance(self):
        assert dcg([0, 0, 0], Permutation(np.array([3, 1, 2]))) == 0.0

    def test_two_relevant(self):
        # 1/log2(2) + 1/log2(4)
        val = dcg([1, 1, 0], Permutation(np.array([1, 3, 2])))
        assert val == pytest.approx(1.5)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            dcg([1, 0], Permutation(np.array([1, 2, 3])))


class TestNdcg:
    def test_ideal(self):
        assert ndcg([1, 0], Permutation(np.array([1, 2]))) == pytest.approx(1.0)

    def test_swapped(self):
        assert ndcg([1, 0], Permutation(np.array([2, 1]))) == pytest.approx(1 / LOG2_3)

    def test_no_relevant_convention(self):
        assert ndcg([0, 0], Permutation(np.array([2, 1]))) == 0.0

    @given(st.integers(2, 8), st.data())
    @settings(max_examples=40, deadline=None)
    def test_range_and_perfection(self, m, data):
        rel = np.array(data.draw(st.lists(st.integers(0, 1), min_size=m, max_size=m)))
        perm_order = data.draw(st.permutations(list(range(m))))
        pos = np.empty(m, dtype=int)
        pos[list(perm_order)] = np.arange(1, m + 1)
        value = ndcg(rel, Permutation(pos))
        assert 0.0 <= value <= 1.0 + 1e-12
        k = int(rel.sum())
        if k:
            top = set(np.flatnonzero(rel))
            ranked_top = set(np.argsort(pos)[:k])
            if value == pytest.approx(1.0):
                assert ranked_top == top
            if ranked_top == top:
                assert value == pytest.approx(1.0)


class TestDpViolation:
    def test_two_items(self):
        pb = PositionBias.for_items(2)
        val = dp_violation(Permutation(np.array([1, 2])), [0, 1], pb)
        assert val == pytest.approx(1 - 1 / LOG2_3)

    def test_mirror_symmetry(self):
        pb = PositionBias.for_items(4)
        p = DoublyStochasticMatrix(np.full((4, 4), 0.25))
        assert dp_violation(p, [0, 1, 0, 1], pb) == pytest.approx(0.0)

    def test_single_group_undefined(self):
        pb = PositionBias.for_items(3)
        assert dp_violation(Permutation(np.array([1, 2, 3])), [1, 1, 1], pb) is None

    def test_three_groups_rejected(self):
        pb = PositionBias.for_items(3)
        with pytest.raises(InvalidInputError):
            dp_violation(Permutation(np.array([1, 2, 3])), [0, 1, 2], pb)

    @given(st.integers(2, 7), st.data())
    @settings(max_examples=30, deadline=None)
    def test_relabel_invariance(self, m, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 10 ** 6)))
        groups = rng.integers(0, 2, size=m)
        if len(np.unique(groups)) < 2:
            groups[0], groups[-1] = 0, 1
        p = DoublyStochasticMatrix(random_ds_matrix(rng, m))
        pb = PositionBias.for_items(m)
        a = dp_violation(p, groups, pb)
        b = dp_violation(p, 1 - groups, pb)
        assert a == pytest.approx(b)


class TestExpectedUtility:
    def test_identity_picks_top(self):
        pb = PositionBias.for_items(2)
        p = DoublyStochasticMatrix(np.eye(2))
        assert expected_utility(p, AdversaryBelief([1, 0]), pb) == pytest.approx(1.0)

    def test_zero_belief(self):
        pb = PositionBias.for_items(3)
        p = DoublyStochasticMatrix(np.eye(3))
        assert expected_utility(p, AdversaryBelief([0, 0, 0]), pb) == 0.0

    def test_uniform_matrix(self):
        pb = PositionBias.for_items(2)
        p = DoublyStochasticMatrix(np.full((2, 2), 0.5))
        expected = 1.0 + 1 / LOG2_3
        assert expected_utility(p, AdversaryBelief([1, 1]), pb) == pytest.approx(expected)

    def test_matches_dcg_for_permutation(self, rng):
        # a permutation matrix reduces expected utility to binary-relevance DCG
        for _ in range(10):
            m = 5
            perm = Permutation(rng.permutation(m) + 1)
            rel = rng.integers(0, 2, size=m)
            pb = PositionBias.for_items(m)
            p = DoublyStochasticMatrix(perm.matrix())
            assert expected_utility(p, AdversaryBelief(rel.astype(float)), pb) \
                == pytest.approx(dcg(rel, perm))

    @given(st.integers(2, 6), st.data())
    @settings(max_examples=30, deadline=None)
    def test_linearity_and_exposure_identity(self, m, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 10 ** 6)))
        pb = PositionBias.for_items(m)
        mat = random_ds_matrix(rng, m)
        p = DoublyStochasticMatrix(mat)
        q1 = rng.random(m)
        q2 = rng.random(m)
        c = float(rng.random())
        lhs = expected_utility(p, AdversaryBelief(np.clip(c * q1 + (1 - c) * q2, 0, 1)), pb)
        rhs = c * expected_utility(p, AdversaryBelief(q1), pb) \
            + (1 - c) * expected_utility(p, AdversaryBelief(q2), pb)
        assert lhs == pytest.approx(rhs)
        # total exposure across items is a constant of the bias vector
        assert np.sum(mat @ pb.values) == pytest.approx(pb.values.sum())
