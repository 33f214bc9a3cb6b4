import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from latentbn.evidence import (
    ENUMERATION_CAP_BITS,
    BudgetError,
    Hyper,
    SufficientStats,
    check_budget,
    enumeration_bits,
    log_posterior_labels,
    log_sum_free,
    log_Z_complete,
    log_Z_X,
    log_Z_XY1,
    log_Z_XY1C,
    log_Z_XY11,
    mc_log_Z_X,
)
from latentbn.model import NetworkShape, ShapeError, symmetry_group, transform_labels

from oracles import all_label_matrices, naive_log_Z_complete, naive_log_Z_marginal, naive_log_Z_X

ONE = Hyper(1.0, 1.0)


def random_data(rng, n, K, M):
    return rng.integers(0, 2, (n, M)), rng.integers(0, 2, (n, K))


class TestHyper:
    @pytest.mark.parametrize("e1,e2", [(0, 1), (1, -1), (math.inf, 1), (math.nan, 1)])
    def test_rejects(self, e1, e2):
        with pytest.raises(ValueError):
            Hyper(e1, e2)


class TestSufficientStats:
    def test_totals(self):
        rng = np.random.default_rng(0)
        X, Y = random_data(rng, 9, 2, 3)
        s = SufficientStats.from_data(X, Y)
        assert s.n == 9
        assert s.cell_counts.sum(axis=(0, 2)).tolist() == [9, 9, 9]
        assert s.latent0_counts.tolist() == (Y == 0).sum(axis=0).tolist()


class TestComplete:
    def test_empty(self):
        assert log_Z_complete(np.zeros((0, 1)), np.zeros((0, 1)), ONE).value == 0.0

    def test_single_row(self):
        assert log_Z_complete([[0]], [[0]], ONE).value == pytest.approx(math.log(1 / 4), abs=1e-14)

    def test_two_rows(self):
        assert log_Z_complete([[0], [0]], [[0], [0]], ONE).value == pytest.approx(math.log(1 / 9), abs=1e-14)

    def test_matches_naive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            K, M, n = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 8)
            X, Y = random_data(rng, n, K, M)
            eta = Hyper(*rng.choice([0.5, 1.0, 2.0], 2))
            assert log_Z_complete(X, Y, eta).value == pytest.approx(naive_log_Z_complete(X, Y, eta.eta1, eta.eta2), abs=1e-11)

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            log_Z_complete([[0], [1]], [[0]], ONE)
        with pytest.raises(ValueError):
            log_Z_complete([[2]], [[0]], ONE)


class TestEvidenceX:
    def test_single_observation(self):
        assert log_Z_X([[0]], ONE, NetworkShape(1, 1, 1, 1)).value == pytest.approx(math.log(0.5), abs=1e-14)

    def test_gray_matches_naive(self):
        rng = np.random.default_rng(2)
        shape = NetworkShape(2, 2, 1, 2)
        for _ in range(10):
            X, _ = random_data(rng, 3, 2, 2)
            eta = Hyper(*rng.choice([0.5, 1.0, 2.0], 2))
            got = log_Z_X(X, eta, shape)
            assert got.terms == 2**6
            assert got.value == pytest.approx(naive_log_Z_X(X, 2, eta.eta1, eta.eta2), abs=1e-10)

    def test_dominates_complete(self):
        rng = np.random.default_rng(3)
        shape = NetworkShape(2, 2, 1, 2)
        X, _ = random_data(rng, 4, 2, 2)
        z = log_Z_X(X, ONE, shape).value
        for Y in all_label_matrices(4, 2):
            assert z >= log_Z_complete(X, Y, ONE).value

    def test_budget(self):
        shape = NetworkShape(2, 2, 1, 1)
        X = np.zeros((13, 1), dtype=int)
        with pytest.raises(BudgetError, match=r"2\^26"):
            log_Z_X(X, ONE, shape)

    def test_budget_check_names_term(self):
        with pytest.raises(BudgetError, match=r"Z_X at n=20 needs 2\^40"):
            check_budget("X", NetworkShape(2, 1, 1, 1), 20)
        assert enumeration_bits("XY1C", NetworkShape(2, 1, 1, 1), 100) == 0
        assert ENUMERATION_CAP_BITS == 24

    def test_empty(self):
        assert log_Z_X(np.zeros((0, 2)), ONE, NetworkShape(1, 1, 1, 2)).value == 0.0

    def test_log_sum_free_partial(self):
        rng = np.random.default_rng(4)
        X, Y = random_data(rng, 3, 2, 1)
        mask = np.zeros_like(Y, dtype=bool)
        mask[1, :] = True
        terms = []
        for a, b in itertools.product((0, 1), repeat=2):
            Z = Y.copy()
            Z[1] = (a, b)
            terms.append(naive_log_Z_complete(X, Z, 1.0, 1.0))
        assert log_sum_free(X, Y, mask, ONE) == pytest.approx(logsumexp(terms), abs=1e-12)


class TestPartialEvidence:
    shape = NetworkShape(K=2, Kstar=1, Kt=1, M=2)

    def test_xy1_four_terms(self):
        rng = np.random.default_rng(5)
        X, Y1 = random_data(rng, 2, 1, 2)
        terms = [naive_log_Z_complete(X, np.hstack([Y1, Y2]), 1.0, 1.0) for Y2 in all_label_matrices(2, 1)]
        assert len(terms) == 4
        assert log_Z_XY1(X, Y1, ONE, self.shape).value == pytest.approx(logsumexp(terms), abs=1e-12)

    def test_xy1c_pins_value_one(self):
        rng = np.random.default_rng(6)
        X, Y1 = random_data(rng, 5, 1, 2)
        Y = np.hstack([Y1, np.ones_like(Y1)])
        assert log_Z_XY1C(X, Y1, ONE, self.shape).value == pytest.approx(naive_log_Z_complete(X, Y, 1, 1), abs=1e-12)

    def test_xy1_dominates_xy1c(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            X, Y1 = random_data(rng, 4, 1, 2)
            assert log_Z_XY1(X, Y1, ONE, self.shape).value >= log_Z_XY1C(X, Y1, ONE, self.shape).value

    def test_non_redundant_collapse(self):
        shape = NetworkShape(2, 2, 1, 2)
        rng = np.random.default_rng(8)
        X, Y = random_data(rng, 4, 2, 2)
        full = log_Z_complete(X, Y, ONE).value
        assert log_Z_XY1(X, Y, ONE, shape).value == pytest.approx(full, abs=1e-13)
        assert log_Z_XY1C(X, Y, ONE, shape).value == pytest.approx(full, abs=1e-13)

    def test_xy11_matches_naive(self):
        shape = NetworkShape(3, 2, 1, 1)
        rng = np.random.default_rng(9)
        X, Y11 = random_data(rng, 3, 1, 1)
        want = naive_log_Z_marginal(X, Y11, 3, 2.0, 0.5)
        assert log_Z_XY11(X, Y11, Hyper(2.0, 0.5), shape).value == pytest.approx(want, abs=1e-11)

    def test_marginalization_consistency(self):
        rng = np.random.default_rng(10)
        X, _ = random_data(rng, 3, 1, 2)
        total = logsumexp([log_Z_XY1(X, Y1, ONE, self.shape).value for Y1 in all_label_matrices(3, 1)])
        assert total == pytest.approx(log_Z_X(X, ONE, self.shape).value, abs=1e-9)

    def test_wrong_label_width(self):
        with pytest.raises(ShapeError):
            log_Z_XY1(np.zeros((2, 2)), np.zeros((2, 2)), ONE, self.shape)


class TestPosterior:
    @pytest.mark.parametrize("K,n", [(1, 3), (2, 3), (2, 2)])
    def test_normalization(self, K, n):
        rng = np.random.default_rng(K * 10 + n)
        shape = NetworkShape(K, K, 1, 2)
        X, _ = random_data(rng, n, K, 2)
        eta = Hyper(0.5, 2.0)
        total = sum(math.exp(log_posterior_labels(X, Y, eta, shape)) for Y in all_label_matrices(n, K))
        assert total == pytest.approx(1.0, abs=1e-9)


class TestSymmetryInvariance:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5))
    def test_complete_evidence_invariant(self, seed, n):
        rng = np.random.default_rng(seed)
        X, Y = random_data(rng, n, 2, 2)
        base = log_Z_complete(X, Y, Hyper(0.7, 1.3)).value
        for perm, flips in symmetry_group(2):
            z = log_Z_complete(X, transform_labels(Y, perm, flips), Hyper(0.7, 1.3)).value
            assert z == pytest.approx(base, abs=1e-9)


class TestMonteCarlo:
    def test_single_observation(self):
        est, se = mc_log_Z_X([[0]], ONE, NetworkShape(1, 1, 1, 1), 100_000, 0)
        assert abs(est - math.log(0.5)) < 3 * se

    def test_empty(self):
        assert mc_log_Z_X(np.zeros((0, 1)), ONE, NetworkShape(1, 1, 1, 1), 100, 0) == (0.0, 0.0)

    def test_agrees_with_enumeration(self):
        rng = np.random.default_rng(11)
        shape = NetworkShape(2, 2, 1, 2)
        X, _ = random_data(rng, 3, 2, 2)
        est, se = mc_log_Z_X(X, ONE, shape, 1_000_000, 1)
        assert abs(est - log_Z_X(X, ONE, shape).value) < 3 * se

    def test_deterministic(self):
        shape = NetworkShape(1, 1, 1, 2)
        X = [[0, 1], [1, 1]]
        assert mc_log_Z_X(X, ONE, shape, 1000, 5) == mc_log_Z_X(X, ONE, shape, 1000, 5)

    def test_min_samples(self):
        with pytest.raises(ValueError):
            mc_log_Z_X([[0]], ONE, NetworkShape(1, 1, 1, 1), 10, 0)
