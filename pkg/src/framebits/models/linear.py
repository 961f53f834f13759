"""Ordinary least squares baseline."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import DegenerateInput, FeatureMismatch
from .scaling import Standardizer

RIDGE = 1e-8


class LinearModel:
    """``y = X @ weights + intercept`` in raw feature units."""

    kind = "linear"

    def __init__(self, weights, intercept: float, feature_names,
                 frame_type: Optional[str] = None, log_target: bool = False):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.intercept = float(intercept)
        self.feature_names = tuple(feature_names)
        self.frame_type = frame_type
        self.log_target = log_target
        if len(self.weights) != len(self.feature_names):
            raise ValueError("one weight per feature name is required")
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.intercept)):
            raise ValueError("linear model has non-finite coefficients")

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.weights):
            raise FeatureMismatch(
                f"model expects {len(self.weights)} columns "
                f"{self.feature_names}, got {X.shape[1]}"
            )
        out = X @ self.weights + self.intercept
        return np.exp(out) if self.log_target else out


def fit_linear(X, y, feature_names=None, frame_type: Optional[str] = None,
               log_target: bool = False) -> LinearModel:
    """Least squares via the normal equations on z-scored columns.

    A ridge of ``1e-8`` is added when the Gram matrix is rank deficient.
    Coefficients are mapped back to raw units before returning.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"bad training shapes X{X.shape} y{y.shape}")
    n, p = X.shape
    if n < p + 1:
        raise DegenerateInput(f"need at least {p + 1} rows for {p} features, got {n}")
    if n > 1 and np.all(X == X[0]) and p > 0:
        raise DegenerateInput("all training rows are identical")
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(p)]
    if log_target:
        if np.any(y <= 0):
            raise ValueError("log_target needs positive labels")
        y = np.log(y)

    scaler = Standardizer.fit(X)
    Z = np.hstack([np.ones((n, 1)), scaler.transform(X)])
    gram = Z.T @ Z
    rhs = Z.T @ y
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        gram = gram + RIDGE * np.eye(gram.shape[0])
    coef = np.linalg.solve(gram, rhs)
    weights = coef[1:] / scaler.scale
    intercept = coef[0] - float(weights @ scaler.mean)
    return LinearModel(weights, intercept, feature_names, frame_type, log_target)
