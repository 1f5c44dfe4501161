"""Regularized logistic regression baseline with cross-validated penalty choice.

The penalty is L2 on standardized features with an unpenalized intercept; the
objective is mean log-loss + (lambda / 2n) * ||w||^2, minimized by damped Newton
iteration to a 1e-8 gradient max-norm. Everything is deterministic given a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort
from .numerics import log_loss, sigmoid


class LinmodError(ValueError):
    pass


@dataclass
class LinearModel:
    weights: np.ndarray          # in standardized-feature space
    intercept: float
    lam: float
    standardization: tuple[np.ndarray, np.ndarray]  # (means, sds); constant -> sd 1
    cv_table: list[tuple[float, float]] = field(default_factory=list)  # (lambda, cv loss)

    def score(self, features):
        mean, sd = self.standardization
        x = (np.atleast_2d(np.asarray(features, dtype=float)) - mean) / sd
        return x @ self.weights + self.intercept


def _standardize_params(x):
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return mean, sd


def _fit_newton(x, y, lam, max_iter=500, tol=1e-8):
    """Damped Newton on mean log-loss + (lam / 2n) ||w||^2, intercept unpenalized."""
    n, p = x.shape
    beta = np.zeros(p + 1)  # [intercept, weights]
    xa = np.hstack([np.ones((n, 1)), x])
    penalty = np.concatenate([[0.0], np.full(p, lam)]) / n

    def objective(b):
        z = xa @ b
        # log(1 + exp(-m)) with m = (2y-1) z, stable form
        margins = (2 * y - 1) * z
        return float(np.logaddexp(0.0, -margins).mean() + 0.5 * penalty @ (b * b))

    obj = objective(beta)
    for _ in range(max_iter):
        prob = sigmoid(xa @ beta)
        grad = xa.T @ (prob - y) / n + penalty * beta
        if np.abs(grad).max() < tol:
            break
        w = prob * (1.0 - prob)
        hess = (xa.T * w) @ xa / n + np.diag(penalty)
        step = np.linalg.solve(hess + 1e-12 * np.eye(p + 1), grad)
        t = 1.0
        for _ in range(50):
            cand = beta - t * step
            cand_obj = objective(cand)
            if cand_obj <= obj + 1e-15:
                beta, obj = cand, cand_obj
                break
            t *= 0.5
        else:
            break
    return beta[0], beta[1:]


def _stratified_folds(y, n_folds, seed):
    rng = np.random.default_rng(seed)
    fold = np.empty(y.size, dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = np.arange(idx.size) % n_folds
    return fold


def fit_logistic(train: Cohort, lambda_grid, n_folds=5, seed=0) -> LinearModel:
    """Pick lambda by minimum mean CV log-loss (ties favor more regularization),
    then refit on the full training set."""
    lambda_grid = [float(l) for l in lambda_grid]
    if not lambda_grid:
        raise LinmodError("lambda_grid must be nonempty")
    if any(l <= 0 for l in lambda_grid):
        raise LinmodError("lambda values must be positive")
    x_raw = train.features
    y = train.outcome.astype(float)
    if not np.isfinite(x_raw).all():
        raise LinmodError("non-finite feature values")
    n_pos, n_neg = int(y.sum()), int((1 - y).sum())
    if n_pos == 0 or n_neg == 0:
        raise LinmodError("training data contains a single outcome class")
    if min(n_pos, n_neg) < n_folds:
        raise LinmodError(f"need at least {n_folds} records of each outcome class")

    mean, sd = _standardize_params(x_raw)
    x = (x_raw - mean) / sd

    fold = _stratified_folds(y, n_folds, seed)
    cv_table = []
    for lam in sorted(lambda_grid):
        losses = []
        for f in range(n_folds):
            hold = fold == f
            b0, w = _fit_newton(x[~hold], y[~hold], lam)
            p = sigmoid(x[hold] @ w + b0)
            losses.append(log_loss(y[hold], p))
        cv_table.append((lam, float(np.mean(losses))))

    # minimal CV loss; ties break toward the larger (more regularized) lambda
    best_loss, neg_lam = min((loss, -lam) for lam, loss in cv_table)
    best_lam = -neg_lam

    b0, w = _fit_newton(x, y, best_lam)
    return LinearModel(w, float(b0), best_lam, (mean, sd), cv_table)


def predict_logistic(model: LinearModel, features) -> float:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        if features.size != model.weights.size:
            raise LinmodError(
                f"feature length {features.size} != model arity {model.weights.size}"
            )
        return float(sigmoid(model.score(features))[0])
    if features.shape[1] != model.weights.size:
        raise LinmodError(
            f"feature length {features.shape[1]} != model arity {model.weights.size}"
        )
    return sigmoid(model.score(features))
