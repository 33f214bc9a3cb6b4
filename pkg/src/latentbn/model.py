"""Two-layered binary Bayesian networks.

``K`` binary latent nodes ``y = (y_1, ..., y_K)`` each point to all ``M``
binary observable nodes.  Latent node ``k`` is 0 with probability ``a[k]``;
observable ``m`` is 0 with probability ``b[y, m]`` given the latent pattern.

Latent patterns and observations are encoded as integers whose binary
expansion, most significant bit first, reads ``y_1 ... y_K`` (resp.
``x_1 ... x_M``).  With this layout the first ``K*`` latent nodes of a pattern
are ``index >> (K - K*)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import permutations, product
from pathlib import Path

import numpy as np

# Value taken by the pinned redundant latent nodes in the fixed-value evidence.
FIXED_REDUNDANT_VALUE = 1

# True parameters must lie in [TRUE_MARGIN, 1 - TRUE_MARGIN].
TRUE_MARGIN = 1e-6

H_KINDS = ("X", "XY11", "XY1", "XY1C")


class ShapeError(ValueError):
    """Raised when shapes of parameters, data or network are incompatible."""


def bit_table(width: int) -> np.ndarray:
    """All ``2**width`` bit vectors, row ``i`` is the MSB-first expansion of ``i``."""
    idx = np.arange(2**width)
    shifts = np.arange(width - 1, -1, -1)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.int8)


def pattern_index(bits: np.ndarray) -> np.ndarray:
    """Inverse of :func:`bit_table` applied row-wise to an ``(n, width)`` bit array."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim == 1:
        bits = bits[None, :]
    width = bits.shape[1]
    weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def pattern_key(index: int, width: int) -> str:
    return format(index, f"0{width}b") if width else ""


@dataclass(frozen=True)
class NetworkShape:
    """Discrete structure of an experiment: model nodes, true nodes, target nodes, observables."""

    K: int
    Kstar: int
    Kt: int
    M: int

    def __post_init__(self):
        for name in ("K", "Kstar", "Kt", "M"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ShapeError(f"{name} must be an integer, got {value!r}")
        if not 1 <= self.Kstar <= self.K:
            raise ShapeError(f"need 1 <= Kstar <= K, got K={self.K}, Kstar={self.Kstar}")
        if not 1 <= self.Kt <= self.Kstar:
            raise ShapeError(f"need 1 <= Kt <= Kstar, got Kt={self.Kt}, Kstar={self.Kstar}")
        if self.M < 1:
            raise ShapeError(f"need M >= 1, got M={self.M}")

    @property
    def redundant(self) -> bool:
        return self.K > self.Kstar

    @property
    def dim_w(self) -> int:
        return self.K + 2**self.K * self.M

    def require_marginal_target(self):
        if self.Kt >= self.Kstar:
            raise ShapeError(
                f"marginal-type quantities need Kt < Kstar, got Kt={self.Kt}, Kstar={self.Kstar}"
            )

    def to_dict(self) -> dict:
        return {"K": int(self.K), "Kstar": int(self.Kstar), "Kt": int(self.Kt), "M": int(self.M)}

    @classmethod
    def from_dict(cls, d: dict) -> NetworkShape:
        return cls(K=int(d["K"]), Kstar=int(d["Kstar"]), Kt=int(d["Kt"]), M=int(d["M"]))


@dataclass(frozen=True, eq=False)
class BNParams:
    """Parameter point ``w = {a_k, b_{y,m}}``.

    ``a`` has shape ``(K,)`` and ``b`` has shape ``(2**K, M)``.  Entries may
    touch 0 or 1 (embedded points use that); use :meth:`check_true` for the
    stricter interior requirement on generating models.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        b = np.array(self.b, dtype=float)
        if b.ndim != 2 or b.shape[0] != 2 ** a.size:
            raise ShapeError(f"b must have shape (2**K, M) = ({2 ** a.size}, M), got {b.shape}")
        if a.size < 1 or b.shape[1] < 1:
            raise ShapeError("need at least one latent and one observable node")
        if np.any(~np.isfinite(a)) or np.any(~np.isfinite(b)):
            raise ValueError("parameters must be finite")
        if np.any((a < 0) | (a > 1)) or np.any((b < 0) | (b > 1)):
            raise ValueError("parameters must lie in [0, 1]")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def K(self) -> int:
        return self.a.size

    @property
    def M(self) -> int:
        return self.b.shape[1]

    @property
    def dim(self) -> int:
        return self.K + self.b.size

    def check_true(self, margin: float = TRUE_MARGIN) -> BNParams:
        lo, hi = margin, 1.0 - margin
        if np.any((self.a < lo) | (self.a > hi)) or np.any((self.b < lo) | (self.b > hi)):
            raise ValueError(f"true parameters must lie in [{lo}, {hi}]")
        return self

    def flat(self) -> np.ndarray:
        """Parameter vector ordered as ``a_1..a_K`` then ``b`` row-major over (pattern, m)."""
        return np.concatenate([self.a, self.b.reshape(-1)])

    @classmethod
    def from_flat(cls, w, K: int, M: int) -> BNParams:
        w = np.asarray(w, dtype=float)
        return cls(w[:K], w[K:].reshape(2**K, M))

    @classmethod
    def random(cls, K: int, M: int, rng, margin: float = 0.05) -> BNParams:
        """Uniform draw inside ``[margin, 1 - margin]``."""
        rng = np.random.default_rng(rng)
        return cls(rng.uniform(margin, 1 - margin, K), rng.uniform(margin, 1 - margin, (2**K, M)))

    def __eq__(self, other):
        if not isinstance(other, BNParams):
            return NotImplemented
        return (
            self.a.shape == other.a.shape
            and self.b.shape == other.b.shape
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )

    def __hash__(self):
        return hash((self.a.tobytes(), self.b.tobytes()))

    def to_dict(self) -> dict:
        return {
            "a": [float(v) for v in self.a],
            "b": {pattern_key(i, self.K): [float(v) for v in row] for i, row in enumerate(self.b)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> BNParams:
        a = np.asarray(d["a"], dtype=float)
        K = a.size
        rows = d["b"]
        if set(rows) != {pattern_key(i, K) for i in range(2**K)}:
            raise ShapeError(f"b must be keyed by every {K}-bit latent pattern")
        b = np.array([rows[pattern_key(i, K)] for i in range(2**K)], dtype=float)
        return cls(a, b)


def save_fixture(path, params: BNParams, shape: NetworkShape) -> None:
    doc = {"shape": shape.to_dict(), **params.to_dict()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_fixture(path) -> tuple[BNParams, NetworkShape]:
    """Read ``{"shape": {...}, "a": [...], "b": {"01": [...], ...}}``.

    The stored parameters describe the network with ``shape.Kstar`` latent nodes.
    """
    doc = json.loads(Path(path).read_text())
    shape = NetworkShape.from_dict(doc["shape"])
    params = BNParams.from_dict(doc)
    if params.K != shape.Kstar or params.M != shape.M:
        raise ShapeError(
            f"fixture parameters have K={params.K}, M={params.M}; shape says Kstar={shape.Kstar}, M={shape.M}"
        )
    return params, shape


@dataclass(frozen=True, eq=False)
class JointTable:
    """``probs[y, x]`` over integer-coded latent patterns and observations."""

    probs: np.ndarray

    @property
    def K(self) -> int:
        return int(self.probs.shape[0]).bit_length() - 1

    @property
    def M(self) -> int:
        return int(self.probs.shape[1]).bit_length() - 1

    def marginal_x(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def marginal_y(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def marginal_prefix(self, width: int) -> np.ndarray:
        """Mass over ``(first `width` latent nodes, x)``; the remaining latent nodes are summed out."""
        K = self.K
        return self.probs.reshape(2**width, 2 ** (K - width), -1).sum(axis=1)


def _bernoulli0(bits, p):
    # probability of the given bits when p is the probability of 0
    return np.where(bits == 0, p, 1.0 - p)


def joint_table(params: BNParams) -> JointTable:
    """Exact ``p(x, y | w)`` over all ``2**(K + M)`` outcomes."""
    ybits = bit_table(params.K)
    xbits = bit_table(params.M)
    prior = np.prod(_bernoulli0(ybits, params.a[None, :]), axis=1)
    lik = np.prod(_bernoulli0(xbits[None, :, :], params.b[:, None, :]), axis=2)
    return JointTable(prior[:, None] * lik)


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` draws from the true model: observations ``X`` and the latent values ``Y1`` that produced them."""

    X: np.ndarray
    Y1: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def Y11(self, Kt: int) -> np.ndarray:
        return self.Y1[:, :Kt]


def sample_dataset(true: BNParams, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. rows ``(y_i, x_i)``; a fixed seed gives a fixed dataset."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    K, M = true.K, true.M
    u = rng.random((n, K + M))
    Y = (u[:, :K] >= true.a[None, :]).astype(np.int8)
    rows = pattern_index(Y) if n else np.zeros(0, dtype=np.int64)
    X = (u[:, K:] >= true.b[rows]).astype(np.int8)
    X.setflags(write=False)
    Y.setflags(write=False)
    return Dataset(X=X, Y1=Y, seed=int(seed))


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def entropies(true: BNParams) -> tuple[float, float]:
    """``(S_X, S_XY)`` in nats by exact enumeration."""
    table = joint_table(true)
    return _entropy(table.marginal_x()), _entropy(table.probs)


def marginal_entropy(true: BNParams, width: int) -> float:
    """Entropy of ``(x, first `width` latent nodes)``."""
    return _entropy(joint_table(true).marginal_prefix(width))


def true_label_posterior(true: BNParams, x, target: int | None = None) -> np.ndarray:
    """``q(y | x)`` over integer-coded patterns of the first ``target`` latent nodes.

    ``target=None`` means all latent nodes.
    """
    x = np.asarray(x).reshape(-1)
    if x.size != true.M:
        raise ShapeError(f"x must have {true.M} bits")
    width = true.K if target is None else int(target)
    if not 1 <= width <= true.K:
        raise ShapeError(f"target width must be in 1..{true.K}")
    col = joint_table(true).marginal_prefix(width)[:, int(pattern_index(x)[0])]
    total = col.sum()
    if total <= 0:
        raise ValueError("q(x) = 0 for this observation")
    return col / total


def log_label_posterior_table(true: BNParams, width: int) -> np.ndarray:
    """``ln q(y_prefix | x)`` as an array indexed ``[prefix_pattern, x]``."""
    m = joint_table(true).marginal_prefix(width)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(m) - np.log(m.sum(axis=0, keepdims=True))


def _kl(q: np.ndarray, p: np.ndarray) -> float:
    mask = q > 0
    if np.any(p[mask] <= 0):
        return math.inf
    return float(np.sum(q[mask] * (np.log(q[mask]) - np.log(p[mask]))))


def h_function(kind: str, params: BNParams, true: BNParams, shape: NetworkShape) -> float:
    """KL-type objective between the true model and the model at ``params``.

    ``X``: observable marginal.  ``XY1``: (x, true latents) with the redundant
    nodes summed out.  ``XY1C``: redundant nodes pinned at
    :data:`FIXED_REDUNDANT_VALUE`.  ``XY11``: (x, first ``Kt`` latents) with
    all other latents summed out.  Returns ``inf`` when the model assigns zero
    mass where the truth does not.
    """
    if kind not in H_KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {H_KINDS}")
    _check_pair(params, true, shape)
    K, Ks = shape.K, shape.Kstar
    p = joint_table(params)
    q = joint_table(true)
    if kind == "X":
        return _kl(q.marginal_x(), p.marginal_x())
    if kind == "XY1":
        return _kl(q.probs, p.marginal_prefix(Ks))
    if kind == "XY1C":
        fixed = int(FIXED_REDUNDANT_VALUE * (2 ** (K - Ks) - 1))
        pinned = p.probs.reshape(2**Ks, 2 ** (K - Ks), -1)[:, fixed, :]
        return _kl(q.probs, pinned)
    return _kl(q.marginal_prefix(shape.Kt), p.marginal_prefix(shape.Kt))


def _check_pair(params: BNParams, true: BNParams, shape: NetworkShape):
    if params.K != shape.K or true.K != shape.Kstar:
        raise ShapeError(
            f"expected model with K={shape.K} and truth with Kstar={shape.Kstar}, "
            f"got {params.K} and {true.K}"
        )
    if params.M != shape.M or true.M != shape.M:
        raise ShapeError(f"both networks need M={shape.M} observables")


def symmetry_counts(shape: NetworkShape, L: int = 2) -> tuple[int, int, int]:
    """Counts of symmetric label assignments ``(C_r, C'_r, C''_r)``.

    ``C_r = K!/(K-K*)! (L!)^K* L^(K-K*)``, ``C'_r = K*! (L!)^K* L^(K-K*)`` and
    ``C''_r = K*! (L!)^K*``.  Python integers, so no overflow.
    """
    K, Ks = shape.K, shape.Kstar
    true_part = math.factorial(L) ** Ks
    redundant = L ** (K - Ks)
    c_r = math.factorial(K) // math.factorial(K - Ks) * true_part * redundant
    c_r1 = math.factorial(Ks) * true_part * redundant
    c_r2 = math.factorial(Ks) * true_part
    return c_r, c_r1, c_r2


def _pattern_action(K: int, dim_perm, value_flips) -> np.ndarray:
    # index of the relabeled pattern, for every old pattern
    bits = bit_table(K)
    new_bits = bits[:, dim_perm] ^ np.asarray(value_flips, dtype=np.int8)[None, :]
    return pattern_index(new_bits)


def _check_group_element(K: int, dim_perm, value_flips):
    perm = np.asarray(dim_perm, dtype=np.int64)
    flips = np.asarray(value_flips, dtype=np.int64)
    if perm.shape != (K,) or sorted(perm.tolist()) != list(range(K)):
        raise ValueError(f"dim_perm must be a permutation of 0..{K - 1}")
    if flips.shape != (K,) or np.any((flips != 0) & (flips != 1)):
        raise ValueError(f"value_flips must be {K} bits")
    return perm, flips.astype(np.int8)


def apply_symmetry(params: BNParams, dim_perm, value_flips) -> BNParams:
    """Relabel the latent nodes: new node ``j`` is old node ``dim_perm[j]``, with its values flipped if ``value_flips[j]``.

    The observable distribution is unchanged; latent patterns are relabeled.
    Permutations are 0-based.
    """
    perm, flips = _check_group_element(params.K, dim_perm, value_flips)
    a = params.a[perm]
    a = np.where(flips == 1, 1.0 - a, a)
    # b_new[z(y)] = b_old[y] with z_j = y_{perm[j]} ^ f_j
    new_of_old = _pattern_action(params.K, perm, flips)
    b = np.empty_like(params.b)
    b[new_of_old] = params.b
    return BNParams(a, b)


def symmetry_group(K: int):
    """All ``K! 2**K`` (permutation, flips) pairs."""
    for perm in permutations(range(K)):
        for flips in product((0, 1), repeat=K):
            yield np.array(perm), np.array(flips, dtype=np.int8)


def transform_labels(Y: np.ndarray, dim_perm, value_flips) -> np.ndarray:
    """Apply the same relabeling as :func:`apply_symmetry` to a latent assignment matrix."""
    Y = np.asarray(Y, dtype=np.int8)
    perm, flips = _check_group_element(Y.shape[1], dim_perm, value_flips)
    return Y[:, perm] ^ flips[None, :]


def inverse_symmetry(dim_perm, value_flips):
    perm = np.asarray(dim_perm)
    flips = np.asarray(value_flips, dtype=np.int8)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    # z_j = y_{perm[j]} ^ f_j  =>  y_i = z_{inv[i]} ^ f_{inv[i]}
    return inv, flips[inv]


def embed_eliminating(true: BNParams, shape: NetworkShape, free_values=None) -> BNParams:
    """Embed the truth by pinning the redundant latents to the fixed value.

    Rows of ``b`` whose redundant part differs from the fixed value are never
    reached and take ``free_values`` (shape ``(2**K - 2**K*, M)`` in pattern
    order, or a scalar; default 0.5).
    """
    K, Ks, M = shape.K, shape.Kstar, shape.M
    _check_embedding(true, shape)
    R = 2 ** (K - Ks)
    fixed = int(FIXED_REDUNDANT_VALUE * (R - 1))
    n_free = 2**K - 2**Ks
    fv = np.broadcast_to(np.asarray(0.5 if free_values is None else free_values, dtype=float), (n_free, M))
    if np.any((fv < 0) | (fv > 1)) or np.any(~np.isfinite(fv)):
        raise ValueError("free values must lie in [0, 1]")
    a = np.concatenate([true.a, np.full(K - Ks, 1.0 - FIXED_REDUNDANT_VALUE)])
    b = np.empty((2**Ks, R, M))
    reachable = np.zeros(R, dtype=bool)
    reachable[fixed] = True
    b[:, reachable, :] = true.b[:, None, :]
    b[:, ~reachable, :] = fv.reshape(2**Ks, R - 1, M)
    return BNParams(a, b.reshape(2**K, M))


def embed_replicating(true: BNParams, shape: NetworkShape, free_a=None) -> BNParams:
    """Embed the truth by copying each true row of ``b`` across all redundant patterns.

    The redundant ``a_k`` are free (``free_a``, default 0.5).
    """
    K, Ks = shape.K, shape.Kstar
    _check_embedding(true, shape)
    fa = np.broadcast_to(np.asarray(0.5 if free_a is None else free_a, dtype=float), (K - Ks,))
    if np.any((fa < 0) | (fa > 1)) or np.any(~np.isfinite(fa)):
        raise ValueError("free values must lie in [0, 1]")
    a = np.concatenate([true.a, fa])
    b = np.repeat(true.b, 2 ** (K - Ks), axis=0)
    return BNParams(a, b)


def _check_embedding(true: BNParams, shape: NetworkShape):
    if not shape.redundant:
        raise ShapeError("embeddings need K > Kstar")
    if true.K != shape.Kstar or true.M != shape.M:
        raise ShapeError(f"truth must have Kstar={shape.Kstar} latents and M={shape.M} observables")
