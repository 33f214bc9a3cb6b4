import math

import numpy as np
import pytest

from latentbn.estimation import (
    ERROR_KINDS,
    EstimationError,
    _successes,
    curve_seed,
    error_curve,
    error_curves,
    estimate_error,
    estimate_errors,
    estimate_free_energies,
    evidences_for,
    mix_seed,
    paired_difference,
    replicate_error,
    replicate_seeds,
    run_replicate,
    splitmix64,
)
from latentbn.evidence import Hyper
from latentbn.model import BNParams, NetworkShape, ShapeError, sample_dataset

from oracles import exact_Dn1, naive_log_Z_complete, naive_log_Z_X

ONE = Hyper(1.0, 1.0)
K1 = BNParams([0.3], [[0.9], [0.2]])
SHAPE_N = NetworkShape(1, 1, 1, 1)
SHAPE_R = NetworkShape(K=2, Kstar=1, Kt=1, M=1)


class TestSeeds:
    def test_splitmix_reference_values(self):
        # first outputs of the reference SplitMix64 generator seeded with 0
        state = 0
        outs = []
        for _ in range(3):
            outs.append(splitmix64(state))
            state = (state + 0x9E3779B97F4A7C15) & (2**64 - 1)
        assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    def test_mix_distinct(self):
        seeds = replicate_seeds(123, 1000)
        assert len(set(seeds)) == 1000
        assert seeds[5] == mix_seed(123, 5)

    def test_curve_seed_depends_on_n(self):
        assert curve_seed(1, 3) != curve_seed(1, 4)


class TestKindChecks:
    def test_non_redundant_kinds(self):
        with pytest.raises(ShapeError):
            evidences_for(["Dr1"], SHAPE_N)
        with pytest.raises(ShapeError):
            evidences_for(["Dn1"], SHAPE_R)

    def test_marginal_kinds_need_kt(self):
        with pytest.raises(ShapeError):
            evidences_for(["Dn2"], NetworkShape(2, 2, 2, 1))

    def test_unknown(self):
        with pytest.raises(ValueError):
            evidences_for(["D"], SHAPE_N)

    def test_evidence_sets(self):
        assert evidences_for(["Dn1"], SHAPE_N) == ["X", "XY"]
        assert evidences_for(["Dr1", "Dr2", "Dr3"], NetworkShape(3, 2, 1, 1)) == ["X", "XY1", "XY11", "XY1C"]


class TestReplicate:
    def test_single_datum_oracle(self):
        # value = ln q(y|x) - ln Z(x, y) + ln Z(x), all in closed form for one datum
        for seed in range(20):
            data = sample_dataset(K1, 1, mix_seed(seed, 0))
            x, y = int(data.X[0, 0]), int(data.Y1[0, 0])
            qxy = (0.3 if y == 0 else 0.7) * ((0.9, 0.2)[y] if x == 0 else 1 - (0.9, 0.2)[y])
            qx = sum((0.3 if yy == 0 else 0.7) * ((0.9, 0.2)[yy] if x == 0 else 1 - (0.9, 0.2)[yy]) for yy in (0, 1))
            want = math.log(qxy / qx) - naive_log_Z_complete([[x]], [[y]], 1, 1) + naive_log_Z_X([[x]], 1, 1, 1)
            assert replicate_error("Dn1", K1, SHAPE_N, ONE, 1, mix_seed(seed, 0)) == pytest.approx(want, abs=1e-13)

    def test_deterministic(self):
        a = replicate_error("Dr1", K1, SHAPE_R, ONE, 3, 99)
        assert a == replicate_error("Dr1", K1, SHAPE_R, ONE, 3, 99)

    def test_records_identity(self):
        rec = run_replicate(K1, SHAPE_R, ONE, 4, 5, ["X", "XY1", "XY1C"])
        for kind, ev in (("Dr1", "XY1C"), ("Dr2", "XY1")):
            assert rec.error(kind) * rec.n == pytest.approx(rec.free_energy(ev) - rec.free_energy("X"), abs=1e-12)


class TestEstimate:
    def test_identical_seeds_zero_stderr(self):
        e = estimate_error("Dn1", K1, SHAPE_N, ONE, 3, 2, 0, seeds=[7, 7])
        assert e.stderr == 0.0

    def test_replicates_minimum(self):
        with pytest.raises(ValueError):
            estimate_error("Dn1", K1, SHAPE_N, ONE, 3, 1, 0)

    def test_exact_dn1_oracle(self):
        exact = exact_Dn1([0.3], [[0.9], [0.2]], 2, 1.0, 1.0)
        e = estimate_error("Dn1", K1, SHAPE_N, ONE, 2, 10_000, 2024)
        assert abs(e.mean - exact) < 3 * e.stderr

    def test_workers_do_not_change_results(self):
        a = estimate_errors(["Dr1", "Dr2"], K1, SHAPE_R, ONE, 3, 40, 11, workers=1)
        b = estimate_errors(["Dr1", "Dr2"], K1, SHAPE_R, ONE, 3, 40, 11, workers=2)
        for k in a:
            assert np.array_equal(a[k].values, b[k].values)
            assert a[k].mean == b[k].mean

    def test_paired_ordering(self):
        shape = NetworkShape(3, 2, 1, 1)
        true = BNParams([0.4, 0.6], [[0.9], [0.7], [0.3], [0.1]])
        ests = estimate_errors(["Dr1", "Dr2", "Dr3"], true, shape, ONE, 3, 200, 5)
        for hi, lo in (("Dr1", "Dr2"), ("Dr2", "Dr3")):
            mean, se = paired_difference(ests[hi], ests[lo])
            assert mean >= -3 * se

    def test_nonnegative(self):
        for kind in ("Dr1", "Dr2"):
            e = estimate_error(kind, K1, SHAPE_R, ONE, 3, 200, 3)
            assert e.mean >= -3 * e.stderr

    def test_failure_threshold(self):
        with pytest.raises(EstimationError):
            _successes([ValueError("x")] * 2 + [None] * 98)


class TestFreeEnergy:
    def test_identity_exact(self):
        fe = estimate_free_energies(["X", "XY1", "XY1C"], K1, SHAPE_R, ONE, 4, 30, 8)
        d = estimate_errors(["Dr1", "Dr2"], K1, SHAPE_R, ONE, 4, 30, 8)
        np.testing.assert_allclose(4 * d["Dr1"].values, fe["XY1C"].values - fe["X"].values, atol=1e-12)
        np.testing.assert_allclose(4 * d["Dr2"].values, fe["XY1"].values - fe["X"].values, atol=1e-12)

    def test_zero_n(self):
        fe = estimate_free_energies(["X"], K1, SHAPE_N, ONE, 0, 5, 1)
        assert fe["X"].mean == 0.0 and fe["X"].plugin == 0.0

    def test_fixed_vs_marginalized(self):
        fe = estimate_free_energies(["XY1", "XY1C"], K1, SHAPE_R, ONE, 4, 400, 9)
        diff = fe["XY1C"].values - fe["XY1"].values
        assert diff.mean() >= -3 * diff.std(ddof=1) / math.sqrt(diff.size)


class TestCurves:
    def test_length_and_order(self):
        c = error_curve("Dr1", K1, SHAPE_R, ONE, [2, 4, 6], 10, 0)
        assert c.n_grid == [2, 4, 6]
        n, mean, se = c.arrays()
        assert n.tolist() == [2, 4, 6] and mean.shape == (3,)

    def test_gaps_for_budget(self):
        c = error_curve("Dr1", K1, SHAPE_R, ONE, [2, 13], 4, 0)
        assert c.n_grid == [2]
        assert c.gaps[0][0] == 13 and "2^26" in c.gaps[0][1]

    def test_increasing_grid(self):
        with pytest.raises(ValueError):
            error_curve("Dr1", K1, SHAPE_R, ONE, [4, 2], 4, 0)

    def test_paired_across_kinds(self):
        cs = error_curves(["Dr1", "Dr2"], K1, SHAPE_R, ONE, [3], 20, 1)
        single = error_curve("Dr1", K1, SHAPE_R, ONE, [3], 20, 1)
        assert np.array_equal(cs["Dr1"].estimates[0].values, single.estimates[0].values)

    def test_larger_target_costs_more(self):
        # paired Dn2 with a one-node target against the full-target Dn1
        shape = NetworkShape(2, 2, 1, 2)
        true = BNParams([0.3, 0.6], [[0.9, 0.8], [0.7, 0.2], [0.3, 0.6], [0.1, 0.15]])
        ests = estimate_errors(["Dn1", "Dn2"], true, shape, ONE, 3, 200, 4)
        mean, se = paired_difference(ests["Dn1"], ests["Dn2"])
        assert mean >= -3 * se


def test_all_kinds_listed():
    assert ERROR_KINDS == ("Dn1", "Dn2", "Dr1", "Dr2", "Dr3")
