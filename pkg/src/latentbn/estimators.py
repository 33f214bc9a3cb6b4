"""scikit-learn style front ends.

``BayesLatentEstimator`` holds data and answers evidence/posterior queries;
``LearningCoefficientRegressor`` fits the ``ln n`` coefficient of an error
curve.  Both expose ``get_params``/``set_params`` through ``BaseEstimator``
and validate inputs with ``sklearn.utils``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .asymptotics import fit_lambda_arrays
from .evidence import Hyper, log_Z_complete, log_Z_X
from .model import NetworkShape


def check_bits(X, name: str = "X", n_columns: int | None = None, allow_empty: bool = False) -> np.ndarray:
    """Validate a 2-d 0/1 matrix and return it as ``int8``."""
    X = check_array(X, dtype=None, ensure_2d=True, ensure_min_samples=0 if allow_empty else 1, input_name=name)
    if X.size and not np.isin(X, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    if n_columns is not None and X.shape[1] != n_columns:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {n_columns}")
    return X.astype(np.int8)


class BayesLatentEstimator(BaseEstimator):
    """Bayesian latent-label estimation for a two-layered binary network.

    Parameters
    ----------
    n_latent : int
        Number of binary latent nodes ``K`` in the model.
    eta1, eta2 : float
        Symmetric Beta hyperparameters of the latent and observable CPTs.
    """

    def __init__(self, n_latent: int = 1, eta1: float = 1.0, eta2: float = 1.0):
        self.n_latent = n_latent
        self.eta1 = eta1
        self.eta2 = eta2

    def _shape(self, M: int) -> NetworkShape:
        return NetworkShape(K=self.n_latent, Kstar=self.n_latent, Kt=self.n_latent, M=M)

    def fit(self, X, y=None):
        X = check_bits(X)
        self.hyper_ = Hyper(float(self.eta1), float(self.eta2))
        self.n_features_in_ = X.shape[1]
        self.X_ = X
        self.log_evidence_ = log_Z_X(X, self.hyper_, self._shape(X.shape[1])).value
        return self

    def log_posterior(self, Y) -> float:
        """``ln p(Y | X)`` for a full latent assignment of the fitted rows."""
        check_is_fitted(self, "log_evidence_")
        Y = check_bits(Y, "Y", self.n_latent)
        if Y.shape[0] != self.X_.shape[0]:
            raise ValueError("Y must have one row per fitted observation")
        return log_Z_complete(self.X_, Y, self.hyper_).value - self.log_evidence_

    def score(self, X, y=None) -> float:
        """Mean Bayes predictive log probability of ``X`` given the fitted data."""
        check_is_fitted(self, "log_evidence_")
        X = check_bits(X, n_columns=self.n_features_in_)
        joint = log_Z_X(np.vstack([self.X_, X]), self.hyper_, self._shape(self.n_features_in_)).value
        return (joint - self.log_evidence_) / X.shape[0]


class LearningCoefficientRegressor(RegressorMixin, BaseEstimator):
    """Fit ``n D(n) = lambda ln n + c`` (optionally with a ``ln ln n`` term).

    ``X`` is a single column of sample sizes and ``y`` the per-datum errors.
    """

    def __init__(self, model: str = "lambda_only"):
        self.model = model

    def fit(self, X, y, stderr=None):
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != 1:
            raise ValueError("X must be a single column of sample sizes")
        y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), input_name="y").ravel()
        self.fit_ = fit_lambda_arrays(X[:, 0], y, stderr, self.model)
        self.lambda_ = self.fit_.lambda_hat
        self.intercept_ = self.fit_.intercept
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        n = check_array(X)[:, 0].astype(float)
        value = self.lambda_ * np.log(n) + self.intercept_
        if self.fit_.mhat_minus_one is not None:
            value -= self.fit_.mhat_minus_one * np.log(np.log(n))
        return value / n
