"""Asymptotic predictions and empirical fits of the ``ln n`` coefficient.

Regular case (``K == K*``): the error coefficients come from Fisher
information matrices of the observable, complete and target-marginal models.
Redundant case: upper/lower brackets on the ``ln n`` coefficients and the
hyperparameter value where the dominant way of expressing the truth changes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .evidence import Hyper
from .model import BNParams, NetworkShape, ShapeError, bit_table, joint_table

# Matrices with a larger 2-norm condition number are treated as singular.
CONDITION_LIMIT = 1e12


class SingularFisherError(ValueError):
    pass


class RankDeficiencyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FisherTriple:
    I_X: np.ndarray
    I_XY: np.ndarray
    I_XY11: np.ndarray
    conditions: tuple
    Kt: int

    @property
    def singular(self) -> bool:
        return any(not math.isfinite(c) or c > CONDITION_LIMIT for c in self.conditions)


def joint_scores(params: BNParams) -> np.ndarray:
    """``d/dw ln p(x, y | w)`` for every outcome, shape ``(2**K, 2**M, dim w)``."""
    K, M = params.K, params.M
    ybits = bit_table(K).astype(float)
    xbits = bit_table(M).astype(float)
    a, b = params.a, params.b
    scores = np.zeros((2**K, 2**M, params.dim))
    scores[:, :, :K] = ((1 - ybits) / a - ybits / (1 - a))[:, None, :]
    # (2**K, 2**M, M): derivative of ln g(x_m, b_{y,m}) w.r.t. b_{y,m}
    db = (1 - xbits)[None, :, :] / b[:, None, :] - xbits[None, :, :] / (1 - b[:, None, :])
    for y in range(2**K):
        scores[y, :, K + y * M : K + (y + 1) * M] = db[y]
    return scores


def _outer_expectation(weights: np.ndarray, grads: np.ndarray) -> np.ndarray:
    g = grads.reshape(-1, grads.shape[-1])
    w = weights.reshape(-1)
    return (g * w[:, None]).T @ g


def fisher_matrices(true_full: BNParams, Kt: int) -> FisherTriple:
    """Exact Fisher matrices at the true parameter of a regular model.

    The score of a marginal model is the posterior average of the complete
    score, e.g. ``d ln p(x) = sum_y p(y | x) d ln p(x, y)``.
    """
    K = true_full.K
    if not 1 <= Kt <= K:
        raise ShapeError(f"Kt must be in 1..{K}")
    true_full.check_true()
    probs = joint_table(true_full).probs
    scores = joint_scores(true_full)
    px = probs.sum(axis=0)
    post = probs / px[None, :]
    grad_x = np.einsum("yx,yxd->xd", post, scores)
    I_X = _outer_expectation(px, grad_x)
    I_XY = _outer_expectation(probs, scores)
    # group patterns by target prefix: (2**Kt, 2**(K-Kt), ...)
    R = 2 ** (K - Kt)
    p_pref = probs.reshape(2**Kt, R, -1)
    post_suffix = p_pref / p_pref.sum(axis=1, keepdims=True)
    grad_11 = np.einsum("tsx,tsxd->txd", post_suffix, scores.reshape(2**Kt, R, *scores.shape[1:]))
    I_XY11 = _outer_expectation(p_pref.sum(axis=1), grad_11)
    mats = [0.5 * (m + m.T) for m in (I_X, I_XY, I_XY11)]
    conds = tuple(float(np.linalg.cond(m)) for m in mats)
    return FisherTriple(*mats, conditions=conds, Kt=Kt)


def _logdet(m: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(m)
    if sign <= 0:
        raise SingularFisherError("matrix is not positive definite")
    return float(val)


def dn_coefficients(triple: FisherTriple) -> tuple[float, float]:
    """``(c_n1, c_n2)``: ``1/2 ln det(I_XY I_X^-1)`` and ``1/2 ln det(I_XY11 I_X^-1)``."""
    if triple.singular:
        raise SingularFisherError(f"Fisher matrices are singular (condition numbers {triple.conditions})")
    ld_x = _logdet(triple.I_X)
    return 0.5 * (_logdet(triple.I_XY) - ld_x), 0.5 * (_logdet(triple.I_XY11) - ld_x)


@dataclass(frozen=True)
class BoundSet:
    """Coefficients of ``ln n / n`` (errors) and ``ln n`` (free energies)."""

    dr1_upper: float
    dr2_upper: float
    diff_lower: float
    eta_t: float
    fx_lower: float
    fxy1c_coeff: float
    fxy1_upper: float

    def to_dict(self) -> dict:
        return asdict(self)


def transition_point(shape: NetworkShape) -> float:
    """Hyperparameter ``eta1`` where the redundant nodes switch from being pinned to replicating rows."""
    if not shape.redundant:
        raise ShapeError("the transition point needs K > Kstar")
    r = shape.K - shape.Kstar
    return 2**r * shape.M / r


def bn_bounds(shape: NetworkShape, eta: Hyper) -> BoundSet:
    if not shape.redundant:
        raise ShapeError("bounds apply to the redundant case K > Kstar")
    r = shape.K - shape.Kstar
    Ks, M = shape.Kstar, shape.M
    eliminate = r * eta.eta1
    replicate = 2**r * M
    dr2 = min(eliminate / 2, replicate / 2)
    fx = (Ks + 2**Ks * M) / 2
    return BoundSet(
        dr1_upper=float(eliminate),
        dr2_upper=float(dr2),
        diff_lower=float(dr2),
        eta_t=float(transition_point(shape)),
        fx_lower=float(fx),
        fxy1c_coeff=float(fx + eliminate),
        fxy1_upper=float((Ks + 2**Ks * M + min(eliminate, replicate)) / 2),
    )


@dataclass(frozen=True)
class LambdaFit:
    """Weighted fit of ``n D(n) = lambda ln n [- (m - 1) ln ln n] + intercept``."""

    lambda_hat: float
    lambda_stderr: float
    intercept: float
    mhat_minus_one: float | None
    residual_rms: float
    n_range: tuple
    model: str
    points: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_range"] = list(self.n_range)
        return d


FIT_MODELS = ("lambda_only", "lambda_and_loglog")


def fit_lambda_arrays(n, d_mean, d_stderr=None, model: str = "lambda_only") -> LambdaFit:
    """Fit the ``ln n`` coefficient of ``n D(n)``.

    Weights are ``1 / (n stderr)^2``; when every stderr is zero (or none is
    given) the fit is unweighted and the reported ``lambda_stderr`` is from
    the residuals.
    """
    if model not in FIT_MODELS:
        raise ValueError(f"model must be one of {FIT_MODELS}")
    n = np.asarray(n, dtype=float)
    y = n * np.asarray(d_mean, dtype=float)
    ncoef = 2 if model == "lambda_only" else 3
    min_points = ncoef + 1
    if n.size < min_points:
        raise RankDeficiencyError(f"{model} needs at least {min_points} points, got {n.size}")
    if np.any(n < 3):
        raise ValueError("fit needs every n >= 3")
    cols = [np.log(n)]
    if model == "lambda_and_loglog":
        cols.append(np.log(np.log(n)))
    cols.append(np.ones_like(n))
    A = np.column_stack(cols)
    if np.linalg.matrix_rank(A) < ncoef:
        raise RankDeficiencyError("regressors are collinear on this grid")

    se = np.zeros_like(n) if d_stderr is None else n * np.asarray(d_stderr, dtype=float)
    if np.all(se == 0):
        weights = np.ones_like(n)
        absolute = False
    elif np.any(se <= 0) or np.any(~np.isfinite(se)):
        raise ValueError("stderr must be all zero or all positive")
    else:
        weights = 1.0 / se**2
        absolute = True
    sw = np.sqrt(weights)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    resid = y - A @ coef
    cov = np.linalg.inv((A * weights[:, None]).T @ A)
    if not absolute:
        dof = n.size - ncoef
        cov = cov * (float(resid @ resid) / dof if dof > 0 else 0.0)
    lam = float(coef[0])
    mhat = float(-coef[1]) if model == "lambda_and_loglog" else None
    return LambdaFit(
        lambda_hat=lam,
        lambda_stderr=float(math.sqrt(max(cov[0, 0], 0.0))),
        intercept=float(coef[-1]),
        mhat_minus_one=mhat,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_range=(int(n.min()), int(n.max())),
        model=model,
        points=int(n.size),
    )


def fit_lambda(curve, model: str = "lambda_only") -> LambdaFit:
    """Fit an :class:`~latentbn.estimation.ErrorCurve`."""
    n, mean, stderr = curve.arrays()
    return fit_lambda_arrays(n, mean, stderr, model)
