"""Acceptance criteria, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL`` line (shown in the pytest
terminal summary) before asserting.  Fixtures were fixed before looking at
any estimate.
"""

import itertools
import math
import time

import numpy as np
import pytest

from acceptance_log import record
from latentbn.asymptotics import bn_bounds, dn_coefficients, fisher_matrices, fit_lambda, transition_point
from latentbn.estimation import error_curve, estimate_errors, paired_difference
from latentbn.evidence import Hyper, log_Z_complete, log_Z_X, mc_log_Z_X
from latentbn.model import (
    BNParams,
    NetworkShape,
    embed_eliminating,
    embed_replicating,
    h_function,
    joint_table,
    symmetry_counts,
    symmetry_group,
    transform_labels,
)

from oracles import finite_difference_fisher

ETAS = (0.5, 1.0, 2.0)


def test_criterion_1_evidence_crosscheck():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    agree = 0
    worst = 0.0
    for i in range(20):
        K, M, n = int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(1, 5))
        eta = Hyper(float(rng.choice(ETAS)), float(rng.choice(ETAS)))
        shape = NetworkShape(K, K, 1, M)
        X = rng.integers(0, 2, (n, M))
        exact = log_Z_X(X, eta, shape).value
        est, se = mc_log_Z_X(X, eta, shape, 1_000_000, 1000 + i)
        z = abs(est - exact) / se
        worst = max(worst, z)
        agree += z <= 3
    elapsed = time.perf_counter() - t0
    ok = agree >= 19 and elapsed < 300
    record(1, ok, f"{agree}/20 within 3 se (worst {worst:.2f} se), {elapsed:.0f}s")
    assert ok


def test_criterion_2_posterior_normalization():
    rng = np.random.default_rng(202)
    worst = 0.0
    count = 0
    for K in (1, 2):
        for n in range(1, 12 // K + 1):
            for M in (1, 2):
                X = rng.integers(0, 2, (n, M))
                eta = Hyper(float(rng.choice(ETAS)), float(rng.choice(ETAS)))
                z = log_Z_X(X, eta, NetworkShape(K, K, 1, M)).value
                total = 0.0
                for flat in itertools.product((0, 1), repeat=K * n):
                    Y = np.array(flat, dtype=np.int8).reshape(n, K)
                    total += math.exp(log_Z_complete(X, Y, eta).value - z)
                worst = max(worst, abs(total - 1.0))
                count += 1
    ok = worst <= 1e-9
    record(2, ok, f"{count} instances, max |sum - 1| = {worst:.2e}")
    assert ok


def test_criterion_3_ordering_suite():
    eta = Hyper(1.0, 1.0)
    margins = []
    failures = []
    redundant = NetworkShape(K=3, Kstar=2, Kt=1, M=2)
    true_r = BNParams([0.4, 0.65], [[0.85, 0.8], [0.7, 0.25], [0.3, 0.75], [0.15, 0.2]])
    regular = NetworkShape(K=2, Kstar=2, Kt=1, M=2)
    for n in (2, 4, 6):
        ests = estimate_errors(["Dr1", "Dr2", "Dr3"], true_r, redundant, eta, n, 200, 3000 + n)
        for hi, lo in (("Dr1", "Dr2"), ("Dr2", "Dr3")):
            mean, se = paired_difference(ests[hi], ests[lo])
            margins.append(mean / se)
            if mean < -3 * se:
                failures.append(f"{hi}<{lo}@{n}")
        ests = estimate_errors(["Dn1", "Dn2"], true_r, regular, eta, n, 200, 4000 + n)
        mean, se = paired_difference(ests["Dn1"], ests["Dn2"])
        margins.append(mean / se)
        if mean < -3 * se:
            failures.append(f"Dn1<Dn2@{n}")
    ok = not failures
    record(3, ok, f"min paired margin {min(margins):.2f} se" + (f"; violations {failures}" if failures else ""))
    assert ok


CRIT4_TRUE = BNParams([0.3], [[0.9, 0.8, 0.7], [0.2, 0.3, 0.1]])


def test_criterion_4_fisher_coefficient():
    # c_n1 from the analytic Fisher matrices, cross-checked against finite differences
    triple = fisher_matrices(CRIT4_TRUE, 1)
    fd = finite_difference_fisher(CRIT4_TRUE.a, CRIT4_TRUE.b, 1)
    np.testing.assert_allclose(triple.I_X, fd[0], rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(triple.I_XY, fd[1], rtol=1e-6, atol=1e-6)
    c_n1, _ = dn_coefficients(triple)
    c_fd = 0.5 * (np.linalg.slogdet(fd[1])[1] - np.linalg.slogdet(fd[0])[1])
    assert c_n1 == pytest.approx(c_fd, rel=1e-5)

    shape = NetworkShape(1, 1, 1, 3)
    curve = error_curve("Dn1", CRIT4_TRUE, shape, Hyper(1.0, 1.0), list(range(4, 17, 2)), 4000, 4444)
    n, mean, se = curve.arrays()
    nd, nse = n * mean, n * se
    rel = abs(nd[-1] - c_n1) / c_n1
    gap = np.abs(nd - c_n1)
    steps = [gap[i + 1] - gap[i] <= 2 * math.hypot(nse[i], nse[i + 1]) for i in (-3, -2)]
    ok = rel <= 0.30 and all(steps)
    record(4, ok, f"c_n1={c_n1:.4f}, n*D(16)={nd[-1]:.4f} +- {nse[-1]:.4f} (rel gap {rel:.1%}), "
                  f"last gaps {np.round(gap[-3:], 3).tolist()}")
    assert ok


CRIT5_TRUE = BNParams([0.3], [[0.85, 0.75], [0.2, 0.3]])


def test_criterion_5_redundant_lambda_bracket():
    shape = NetworkShape(K=2, Kstar=1, Kt=1, M=2)
    n_grid = list(range(3, 11))
    assert transition_point(shape) == 4.0
    lams = {}
    for eta1 in (0.5, 1.0, 2.0):
        curve = error_curve("Dr1", CRIT5_TRUE, shape, Hyper(eta1, 1.0), n_grid, 1000, 5555)
        lams[eta1] = fit_lambda(curve)
    lam = lams[1.0].lambda_hat
    in_bracket = 0.125 <= lam <= 1.5
    increasing = lams[0.5].lambda_hat < lams[1.0].lambda_hat < lams[2.0].lambda_hat
    ok = in_bracket and increasing
    summary = ", ".join(f"eta1={e:g}: {f.lambda_hat:.3f}+-{f.lambda_stderr:.3f}" for e, f in lams.items())
    record(5, ok, f"lambda_hat {summary}; bracket [0.125, 1.5] {'met' if in_bracket else 'missed'}, "
                  f"increasing {'yes' if increasing else 'no'}")
    assert ok


def test_criterion_6_phase_transition_table():
    shapes = [(2, 1, 1), (2, 1, 2), (2, 1, 3), (3, 1, 2), (3, 2, 1), (3, 2, 2), (4, 1, 1), (4, 2, 3), (4, 3, 2), (5, 2, 2)]
    mismatches = 0
    for K, Ks, M in shapes:
        shape = NetworkShape(K, Ks, 1, M)
        r = K - Ks
        for eta1 in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0):
            b = bn_bounds(shape, Hyper(eta1, 1.0))
            want = (r * eta1, min(r * eta1 / 2, 2 ** (r - 1) * M), 2**r * M / r)
            mismatches += (b.dr1_upper, b.dr2_upper, b.eta_t) != want
    ok = mismatches == 0
    record(6, ok, f"{len(shapes)} shapes x 7 eta1 values, {mismatches} mismatches")
    assert ok


def test_criterion_7_symmetry_invariance():
    rng = np.random.default_rng(707)
    worst = 0.0
    group = list(symmetry_group(2))
    for _ in range(50):
        n = int(rng.integers(1, 6))
        M = int(rng.integers(1, 3))
        X = rng.integers(0, 2, (n, M))
        Y = rng.integers(0, 2, (n, 2))
        eta = Hyper(float(rng.choice(ETAS)), float(rng.choice(ETAS)))
        base = log_Z_complete(X, Y, eta).value
        for perm, flips in group:
            worst = max(worst, abs(log_Z_complete(X, transform_labels(Y, perm, flips), eta).value - base))
    counts = symmetry_counts(NetworkShape(2, 1, 1, 1))
    invariant = worst <= 1e-9 and len(group) == 8
    counts_ok = counts == (8, 8, 2)
    ok = invariant and counts_ok
    record(7, ok, f"max deviation over {len(group)} actions {worst:.1e}; symmetry_counts {counts} vs required (8, 8, 2)")
    assert ok


def test_criterion_8_embeddings():
    rng = np.random.default_rng(808)
    worst_x = worst_h = 0.0
    ineq_failures = 0
    shapes = [NetworkShape(2, 1, 1, 2), NetworkShape(3, 2, 1, 2), NetworkShape(3, 1, 1, 3)]
    for i in range(100):
        shape = shapes[i % len(shapes)]
        true = BNParams.random(shape.Kstar, shape.M, rng)
        qx = joint_table(true).marginal_x()
        fv = rng.uniform(0, 1, (2**shape.K - 2**shape.Kstar, shape.M))
        p1 = embed_eliminating(true, shape, fv)
        p2 = embed_replicating(true, shape, rng.uniform(0, 1, shape.K - shape.Kstar))
        for p in (p1, p2):
            worst_x = max(worst_x, float(np.max(np.abs(joint_table(p).marginal_x() - qx))))
        worst_h = max(worst_h, h_function("XY1", p2, true, shape))
    for i in range(100):
        shape = NetworkShape(3, 2, 1, 2)
        true = BNParams.random(2, 2, rng)
        params = BNParams.random(3, 2, rng)
        hx = h_function("X", params, true, shape)
        ineq_failures += not (
            h_function("XY1C", params, true, shape) > hx
            and h_function("XY1", params, true, shape) > hx
            and h_function("XY11", params, true, shape) > hx
        )
    ok = worst_x <= 1e-12 and worst_h <= 1e-12 and ineq_failures == 0
    record(8, ok, f"max |p(x) - q(x)| {worst_x:.1e}, max H_XY1 at P2 {worst_h:.1e}, h-inequality failures {ineq_failures}/100")
    assert ok
