"""Marginal likelihoods of the two-layered network under a symmetric Beta prior.

Every ``a_k`` has prior ``Beta(eta1, eta1)`` and every ``b_{y,m}`` has
``Beta(eta2, eta2)``.  With all latent values known the evidence is a product
of Beta-function ratios; when some latent values are summed out, the sum runs
over every assignment of the free cells in Gray-code order so that each step
touches one row and costs ``O(M)`` table lookups.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import betaln

from .model import FIXED_REDUNDANT_VALUE, NetworkShape, ShapeError, bit_table, pattern_index

# Largest number of free latent bits one evidence call may enumerate.
ENUMERATION_CAP_BITS = 24

EVIDENCE_KINDS = ("complete", "X", "XY1", "XY1C", "XY11")


class BudgetError(RuntimeError):
    """The requested exact enumeration exceeds :data:`ENUMERATION_CAP_BITS`."""

    def __init__(self, bits: int, cap: int = ENUMERATION_CAP_BITS, what: str = "evidence"):
        self.bits = bits
        self.cap = cap
        super().__init__(
            f"{what} needs 2^{bits} latent assignments, above the enumeration cap of 2^{cap}"
        )


@dataclass(frozen=True)
class Hyper:
    eta1: float
    eta2: float

    def __post_init__(self):
        for name in ("eta1", "eta2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")


@dataclass(frozen=True)
class LogEvidence:
    value: float
    kind: str
    terms: int


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Counts that determine the complete-data evidence.

    ``latent0_counts[k]`` counts rows with ``y_k = 0``; ``cell_counts[y, m, v]``
    counts rows with latent pattern ``y`` and ``x_m = v``.
    """

    latent0_counts: np.ndarray
    cell_counts: np.ndarray

    @property
    def n(self) -> int:
        return int(self.cell_counts[:, 0, :].sum())

    @classmethod
    def from_data(cls, X, Y) -> SufficientStats:
        X = np.asarray(X, dtype=np.int64)
        Y = np.asarray(Y, dtype=np.int64)
        K, M = Y.shape[1], X.shape[1]
        rows = pattern_index(Y) if Y.shape[0] else np.zeros(0, dtype=np.int64)
        cells = np.zeros((2**K, M, 2), dtype=np.int64)
        for m in range(M):
            np.add.at(cells[:, m, :], (rows, X[:, m]), 1)
        return cls(latent0_counts=(Y == 0).sum(axis=0), cell_counts=cells)


def _validate_data(X, Y, K: int | None = None, M: int | None = None):
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.ndim != 2 or Y.ndim != 2:
        raise ShapeError("X and Y must be 2-d bit matrices")
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if M is not None and X.shape[1] != M:
        raise ShapeError(f"X must have {M} columns, got {X.shape[1]}")
    if K is not None and Y.shape[1] != K:
        raise ShapeError(f"Y must have {K} columns, got {Y.shape[1]}")
    for name, arr in (("X", X), ("Y", Y)):
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must contain only 0/1")
    return X.astype(np.int8), Y.astype(np.int8)


def _log_z_from_stats(stats: SufficientStats, eta: Hyper) -> float:
    n = stats.n
    n0 = stats.latent0_counts
    c0 = stats.cell_counts[..., 0]
    c1 = stats.cell_counts[..., 1]
    latent = np.sum(betaln(eta.eta1 + n0, eta.eta1 + n - n0) - betaln(eta.eta1, eta.eta1))
    cells = np.sum(betaln(eta.eta2 + c0, eta.eta2 + c1) - betaln(eta.eta2, eta.eta2))
    return float(latent + cells)


def log_Z_complete(X, Y_full, eta: Hyper) -> LogEvidence:
    """``ln Z(X, Y)`` in closed form."""
    X, Y = _validate_data(X, Y_full)
    if X.shape[0] == 0:
        return LogEvidence(0.0, "complete", 1)
    return LogEvidence(_log_z_from_stats(SufficientStats.from_data(X, Y), eta), "complete", 1)


@numba.njit(cache=True)
def _gray_logsumexp(X, Y, free_rows, free_cols, lat_table, cell_table, K):
    """Log-sum-exp of the complete-data evidence over every setting of the free cells.

    ``Y`` holds the starting assignment (free cells at 0) and is modified in
    place.  ``lat_table[c]`` is the latent-node term for ``c`` zeros and
    ``cell_table[c0, c1]`` the observable-cell term.
    """
    n, M = X.shape
    nfree = free_rows.shape[0]
    npat = 1 << K
    n0 = np.zeros(K, np.int64)
    cells = np.zeros((npat, M, 2), np.int64)
    pat = np.zeros(n, np.int64)
    for i in range(n):
        p = 0
        for k in range(K):
            p = (p << 1) | Y[i, k]
            if Y[i, k] == 0:
                n0[k] += 1
        pat[i] = p
        for m in range(M):
            cells[p, m, X[i, m]] += 1
    total = 0.0
    for k in range(K):
        total += lat_table[n0[k]]
    for p in range(npat):
        for m in range(M):
            total += cell_table[cells[p, m, 0], cells[p, m, 1]]

    run_max = total
    run_sum = 1.0
    nsteps = 1 << nfree
    for step in range(1, nsteps):
        # bit to flip: index of the lowest set bit of step
        s = step
        bit = 0
        while (s & 1) == 0:
            s >>= 1
            bit += 1
        i = free_rows[bit]
        k = free_cols[bit]
        old = n0[k]
        if Y[i, k] == 0:
            Y[i, k] = 1
            n0[k] = old - 1
        else:
            Y[i, k] = 0
            n0[k] = old + 1
        total += lat_table[n0[k]] - lat_table[old]
        p_old = pat[i]
        p_new = p_old ^ (1 << (K - 1 - k))
        pat[i] = p_new
        for m in range(M):
            v = X[i, m]
            a0 = cells[p_old, m, 0]
            a1 = cells[p_old, m, 1]
            b0 = cells[p_new, m, 0]
            b1 = cells[p_new, m, 1]
            before = cell_table[a0, a1] + cell_table[b0, b1]
            cells[p_old, m, v] -= 1
            cells[p_new, m, v] += 1
            after = cell_table[cells[p_old, m, 0], cells[p_old, m, 1]] + cell_table[
                cells[p_new, m, 0], cells[p_new, m, 1]
            ]
            total += after - before
        if total > run_max:
            run_sum = run_sum * math.exp(run_max - total) + 1.0
            run_max = total
        else:
            run_sum += math.exp(total - run_max)
    return run_max + math.log(run_sum)


def _tables(n: int, eta: Hyper):
    c = np.arange(n + 1, dtype=float)
    lat = betaln(eta.eta1 + c, eta.eta1 + n - c) - betaln(eta.eta1, eta.eta1)
    cell = betaln(eta.eta2 + c[:, None], eta.eta2 + c[None, :]) - betaln(eta.eta2, eta.eta2)
    return lat, cell


def log_sum_free(X, Y_start, free_mask, eta: Hyper, cap_bits: int = ENUMERATION_CAP_BITS) -> float:
    """``ln sum_Y Z(X, Y)`` over all assignments of the cells where ``free_mask`` is True.

    Cells outside the mask keep their value from ``Y_start``.
    """
    X, Y = _validate_data(X, Y_start)
    free_mask = np.asarray(free_mask, dtype=bool)
    if free_mask.shape != Y.shape:
        raise ShapeError("free_mask must have the shape of Y")
    nbits = int(free_mask.sum())
    if nbits > cap_bits:
        raise BudgetError(nbits, cap_bits)
    n = X.shape[0]
    if n == 0:
        return 0.0
    Y = Y.copy()
    Y[free_mask] = 0
    # enumerate cells row-major so consecutive Gray bits stay within a row
    rows, cols = np.nonzero(free_mask)
    lat, cell = _tables(n, eta)
    return float(
        _gray_logsumexp(
            np.ascontiguousarray(X), Y, rows.astype(np.int64), cols.astype(np.int64), lat, cell, Y.shape[1]
        )
    )


def enumeration_bits(kind: str, shape: NetworkShape, n: int) -> int:
    """Number of free latent bits an evidence of ``kind`` enumerates at sample size ``n``."""
    if kind == "X":
        return shape.K * n
    if kind == "XY1":
        return (shape.K - shape.Kstar) * n
    if kind == "XY11":
        return (shape.K - shape.Kt) * n
    if kind in ("complete", "XY1C"):
        return 0
    raise ValueError(f"unknown evidence kind {kind!r}")


def check_budget(kind: str, shape: NetworkShape, n: int, cap_bits: int = ENUMERATION_CAP_BITS):
    bits = enumeration_bits(kind, shape, n)
    if bits > cap_bits:
        raise BudgetError(bits, cap_bits, what=f"Z_{kind} at n={n}")


def log_Z_X(X, eta: Hyper, shape: NetworkShape, cap_bits: int = ENUMERATION_CAP_BITS) -> LogEvidence:
    """``ln Z(X) = ln sum_Y Z(X, Y)`` over all ``2**(K n)`` latent assignments."""
    X = np.asarray(X)
    n = X.shape[0]
    Y = np.zeros((n, shape.K), dtype=np.int8)
    mask = np.ones_like(Y, dtype=bool)
    return LogEvidence(log_sum_free(X, Y, mask, eta, cap_bits), "X", 2 ** int(mask.sum()))


def _padded(Y_part, shape: NetworkShape, n: int):
    Y_part = np.asarray(Y_part, dtype=np.int8).reshape(n, -1)
    Y = np.zeros((n, shape.K), dtype=np.int8)
    Y[:, : Y_part.shape[1]] = Y_part
    return Y


def log_Z_XY1(X, Y1, eta: Hyper, shape: NetworkShape, cap_bits: int = ENUMERATION_CAP_BITS) -> LogEvidence:
    """Evidence with the true latents given and the redundant ones summed out."""
    X = np.asarray(X)
    n = X.shape[0]
    _validate_data(X, Y1, K=shape.Kstar, M=shape.M)
    Y = _padded(Y1, shape, n)
    mask = np.zeros_like(Y, dtype=bool)
    mask[:, shape.Kstar :] = True
    return LogEvidence(log_sum_free(X, Y, mask, eta, cap_bits), "XY1", 2 ** int(mask.sum()))


def log_Z_XY1C(X, Y1, eta: Hyper, shape: NetworkShape) -> LogEvidence:
    """Evidence with the true latents given and the redundant ones pinned at the fixed value."""
    X = np.asarray(X)
    n = X.shape[0]
    _validate_data(X, Y1, K=shape.Kstar, M=shape.M)
    Y = _padded(Y1, shape, n)
    Y[:, shape.Kstar :] = FIXED_REDUNDANT_VALUE
    return LogEvidence(log_Z_complete(X, Y, eta).value, "XY1C", 1)


def log_Z_XY11(X, Y11, eta: Hyper, shape: NetworkShape, cap_bits: int = ENUMERATION_CAP_BITS) -> LogEvidence:
    """Evidence with the first ``Kt`` latents given and every other latent summed out."""
    X = np.asarray(X)
    n = X.shape[0]
    _validate_data(X, Y11, K=shape.Kt, M=shape.M)
    Y = _padded(Y11, shape, n)
    mask = np.zeros_like(Y, dtype=bool)
    mask[:, shape.Kt :] = True
    return LogEvidence(log_sum_free(X, Y, mask, eta, cap_bits), "XY11", 2 ** int(mask.sum()))


def log_posterior_labels(X, Y_full, eta: Hyper, shape: NetworkShape) -> float:
    """``ln p(Y | X) = ln Z(X, Y) - ln Z(X)``."""
    return log_Z_complete(X, Y_full, eta).value - log_Z_X(X, eta, shape).value


def _log_px_given_w(xidx, a, b, K):
    # a: (S, K), b: (S, 2**K, M); returns ln p(x | w), shape (S, len(xidx))
    ybits = bit_table(K)
    prior = np.prod(np.where(ybits[None] == 0, a[:, None, :], 1 - a[:, None, :]), axis=2)
    xbits = bit_table(b.shape[2])[xidx]
    lik = np.prod(np.where(xbits[None, None] == 0, b[:, :, None, :], 1 - b[:, :, None, :]), axis=3)
    return np.log(np.einsum("sk,sku->su", prior, lik))


def mc_log_Z_X(X, eta: Hyper, shape: NetworkShape, samples: int, seed, chunk: int = 1 << 16):
    """Plain Monte Carlo over the prior for ``ln Z(X)``.

    Returns ``(estimate, stderr)``; the standard error is the delta-method
    value ``sd(weights) / (sqrt(S) mean(weights))``.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    X = np.asarray(X, dtype=np.int8)
    if X.ndim != 2 or X.shape[1] != shape.M:
        raise ShapeError(f"X must be an (n, {shape.M}) bit matrix")
    if X.shape[0] == 0:
        return 0.0, 0.0
    xidx, counts = np.unique(pattern_index(X), return_counts=True)
    rng = np.random.default_rng(seed)
    logw = np.empty(samples)
    done = 0
    while done < samples:
        s = min(chunk, samples - done)
        a = rng.beta(eta.eta1, eta.eta1, size=(s, shape.K))
        b = rng.beta(eta.eta2, eta.eta2, size=(s, 2**shape.K, shape.M))
        with np.errstate(divide="ignore"):
            logw[done : done + s] = _log_px_given_w(xidx, a, b, shape.K) @ counts
        done += s
    if not np.isfinite(logw).any():
        warnings.warn("all Monte Carlo weights underflowed", RuntimeWarning, stacklevel=2)
        return -math.inf, math.inf
    top = np.max(logw)
    w = np.exp(logw - top)
    mean = w.mean()
    estimate = top + math.log(mean)
    stderr = w.std(ddof=1) / (math.sqrt(samples) * mean)
    ess = w.sum() ** 2 / np.sum(w**2)
    if ess < 10:
        warnings.warn(f"degenerate Monte Carlo weights (effective sample size {ess:.1f})", RuntimeWarning, stacklevel=2)
    return float(estimate), float(stderr)
