"""Ridge-stabilized linear and logistic regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY = "identity"
LOGISTIC = "logistic"
RIDGE = 1e-6


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float
    link: str

    def __post_init__(self):
        if self.link not in (IDENTITY, LOGISTIC):
            raise ValueError(f"unknown link {self.link!r}")
        if not (np.all(np.isfinite(self.coef)) and np.isfinite(self.intercept)):
            raise ValueError("coefficients must be finite")


def _design(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array")
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _penalized_logloss(Z, y, w, beta, ridge):
    eta = Z @ beta
    return float(np.dot(w, np.logaddexp(0.0, eta) - y * eta) + 0.5 * ridge * beta @ beta)


def fit_linear(X, y, link: str = IDENTITY, weights=None, ridge: float = RIDGE,
               max_iter: int = 200, tol: float = 1e-10) -> LinearModel:
    """Least squares (identity link) or IRLS maximum likelihood (logistic link).

    An L2 penalty ``ridge`` on all coefficients, intercept included, keeps
    the normal equations solvable for singular designs and keeps logistic
    coefficients finite on separable or single-class data.
    """
    Z = _design(X)
    y = np.asarray(y, dtype=np.float64)
    n, k = Z.shape
    if n == 0:
        raise ValueError("cannot fit on empty data")
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0):
        raise ValueError("weights must be a non-negative vector with one entry per row")
    if link not in (IDENTITY, LOGISTIC):
        raise ValueError(f"unknown link {link!r}")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    penalty = ridge * np.eye(k)

    if link == IDENTITY:
        A = Z.T @ (w[:, None] * Z) + penalty
        beta = np.linalg.solve(A, Z.T @ (w * y))
        return LinearModel(beta[1:].copy(), float(beta[0]), IDENTITY)

    if not np.all((y >= 0) & (y <= 1)):
        raise ValueError("logistic link requires targets in [0, 1]")
    beta = np.zeros(k)
    obj = _penalized_logloss(Z, y, w, beta, ridge)
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-np.clip(Z @ beta, -700, 700)))
        grad = Z.T @ (w * (p - y)) + ridge * beta
        H = Z.T @ ((w * p * (1.0 - p))[:, None] * Z) + penalty
        step = np.linalg.solve(H, grad)
        # backtracking keeps every Newton step a descent step
        scale = 1.0
        while True:
            cand = beta - scale * step
            new_obj = _penalized_logloss(Z, y, w, cand, ridge)
            if new_obj <= obj or scale < 1e-10:
                break
            scale *= 0.5
        beta, moved = cand, scale * np.max(np.abs(step))
        obj = new_obj
        if moved < tol:
            break
    return LinearModel(beta[1:].copy(), float(beta[0]), LOGISTIC)


def predict_linear(model: LinearModel, X) -> np.ndarray:
    """Fitted mean: linear predictor, or its logistic transform."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.coef.shape[0]:
        raise ValueError(f"expected {model.coef.shape[0]} feature columns")
    eta = X @ model.coef + model.intercept
    if model.link == LOGISTIC:
        return 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
    return eta
