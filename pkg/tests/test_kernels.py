import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairrank.core import DoublyStochasticMatrix, Permutation, SolverSettings
from fairrank.errors import InvalidInputError
from fairrank.kernels import (bvn_decompose, ds_project, ds_project_batch,
                              hungarian_max, sample_bvn, simplex_project)

from conftest import random_ds_matrix
from oracles import (brute_force_assignment, ds_project_2x2_reference,
                     ds_project_small_reference, simplex_project_reference)


class TestSimplexProject:
    def test_already_on_simplex(self):
        assert np.allclose(simplex_project([0.5, 0.5]), [0.5, 0.5])

    def test_beyond_vertex(self):
        assert np.allclose(simplex_project([2.0, 0.0]), [1.0, 0.0])

    def test_interior_shift(self):
        assert np.allclose(simplex_project([0.4, 0.3]), [0.55, 0.45])

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            simplex_project([np.nan, 0.0])

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_matches_reference_and_idempotent(self, xs):
        x = np.array(xs)
        p = simplex_project(x)
        assert np.array_equal(p, simplex_project_reference(x))
        assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
        assert np.allclose(simplex_project(p), p, atol=1e-12)

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=10), st.data())
    @settings(max_examples=40, deadline=None)
    def test_order_equivariance(self, xs, data):
        x = np.array(xs)
        perm = np.array(data.draw(st.permutations(list(range(len(xs))))))
        assert np.allclose(simplex_project(x)[perm], simplex_project(x[perm]))


class TestDsProject:
    def test_identity_fixed(self):
        assert np.allclose(ds_project(np.eye(4)).entries, np.eye(4), atol=1e-8)

    def test_constant_matrix(self):
        out = ds_project(np.full((5, 5), 3.7)).entries
        assert np.allclose(out, 0.2, atol=1e-8)

    def test_scaled_diagonal_clips_to_identity(self):
        out = ds_project(np.array([[2.0, 0.0], [0.0, 2.0]])).entries
        assert np.allclose(out, np.eye(2), atol=1e-8)

    def test_feasible_input_is_fixed_point(self, rng):
        for _ in range(10):
            p = random_ds_matrix(rng, 6)
            out = ds_project(p).entries
            assert np.abs(out - p).max() < 1e-6

    def test_matches_2x2_oracle(self, rng):
        for _ in range(100):
            r = rng.normal(scale=2.0, size=(2, 2))
            out = ds_project(r).entries
            assert np.abs(out - ds_project_2x2_reference(r)).max() < 1e-4

    def test_matches_3x3_oracle(self, rng):
        for _ in range(30):
            r = rng.normal(scale=1.5, size=(3, 3))
            out = ds_project(r).entries
            assert np.abs(out - ds_project_small_reference(r)).max() < 1e-4

    def test_relaxed_variant_matches_plain(self, rng):
        settings_fast = SolverSettings(admm_relax=1.8, admm_rho_auto=True)
        for _ in range(20):
            r = rng.normal(scale=3.0, size=(1, 5, 5))
            plain, _ = ds_project_batch(r)
            fast, _ = ds_project_batch(r, settings_fast)
            assert np.abs(plain - fast).max() < 1e-6

    def test_output_feasibility(self, rng):
        r = rng.normal(scale=10.0, size=(8, 7, 7))
        out, _ = ds_project_batch(r)
        assert out.min() >= 0.0
        assert np.abs(out.sum(axis=1) - 1).max() < 1e-6
        assert np.abs(out.sum(axis=2) - 1).max() < 1e-6

    def test_non_square_rejected(self):
        with pytest.raises(InvalidInputError):
            ds_project(np.zeros((2, 3)))


class TestHungarianMax:
    def test_diagonal_dominance(self):
        perm = hungarian_max([[2.0, 1.0], [1.0, 2.0]])
        assert perm.positions.tolist() == [1, 2]

    def test_all_equal_tie_break(self):
        assert hungarian_max(np.ones((5, 5))).positions.tolist() == [1, 2, 3, 4, 5]

    def test_structured_ties_lexicographic(self, rng):
        # equal blocks create many optima; the smallest position vector wins
        for _ in range(20):
            score = rng.integers(0, 3, size=(4, 4)).astype(float)
            perm = hungarian_max(score)
            _best, _all, lex = brute_force_assignment(score)
            assert tuple(perm.positions) == lex

    def test_matches_brute_force(self, rng):
        for _ in range(60):
            m = int(rng.integers(2, 7))
            score = rng.normal(size=(m, m))
            perm = hungarian_max(score)
            best, _all, lex = brute_force_assignment(score)
            value = sum(score[j, perm.positions[j] - 1] for j in range(m))
            assert value == pytest.approx(best)
            assert tuple(perm.positions) == lex

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidInputError):
            hungarian_max(np.zeros((2, 3)))
        with pytest.raises(InvalidInputError):
            hungarian_max(np.array([[np.inf, 0], [0, 1]]))


class TestBvn:
    def test_identity(self):
        decomp = bvn_decompose(DoublyStochasticMatrix(np.eye(3)))
        assert len(decomp.terms) == 1
        weight, perm = decomp.terms[0]
        assert weight == pytest.approx(1.0)
        assert perm.positions.tolist() == [1, 2, 3]

    def test_uniform_2x2(self):
        decomp = bvn_decompose(DoublyStochasticMatrix(np.full((2, 2), 0.5)))
        assert sorted(w for w, _ in decomp.terms) == pytest.approx([0.5, 0.5])
        orders = {tuple(p.positions) for _, p in decomp.terms}
        assert orders == {(1, 2), (2, 1)}

    def test_reconstruction_and_caps(self, rng):
        for _ in range(25):
            m = 6
            p = random_ds_matrix(rng, m, n_perms=int(rng.integers(2, 10)))
            decomp = bvn_decompose(DoublyStochasticMatrix(p))
            assert len(decomp.terms) <= (m - 1) ** 2 + 1
            assert decomp.weights.sum() == pytest.approx(1.0, abs=1e-8)
            assert np.abs(decomp.reconstruct() - p).max() < 1e-6

    def test_infeasible_rejected(self):
        with pytest.raises(InvalidInputError):
            bvn_decompose(DoublyStochasticMatrix.__new__(DoublyStochasticMatrix))


class TestSampleBvn:
    def test_single_term_always(self):
        decomp = bvn_decompose(DoublyStochasticMatrix(np.eye(4)))
        for seed in range(5):
            assert sample_bvn(decomp, seed).positions.tolist() == [1, 2, 3, 4]

    def test_two_term_frequencies(self):
        decomp = bvn_decompose(DoublyStochasticMatrix(np.full((2, 2), 0.5)))
        rng = np.random.default_rng(7)
        n = 100_000
        hits = sum(sample_bvn(decomp, rng).positions[0] == 1 for _ in range(n))
        assert abs(hits / n - 0.5) < 0.01

    def test_seed_determinism(self):
        decomp = bvn_decompose(DoublyStochasticMatrix(np.full((3, 3), 1 / 3)))
        a = [tuple(sample_bvn(decomp, seed).positions) for seed in range(20)]
        b = [tuple(sample_bvn(decomp, seed).positions) for seed in range(20)]
        assert a == b
