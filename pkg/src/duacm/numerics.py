"""Shared numerical primitives used across models and evaluation."""

from __future__ import annotations

import numpy as np

PROB_EPS = 1e-12


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def logit(p):
    p = np.asarray(p, dtype=float)
    out = np.log(p) - np.log1p(-p)
    if out.ndim == 0:
        return float(out)
    return out


def softmax_rows(scores):
    """Row-wise softmax of a 2-d score array."""
    scores = np.asarray(scores, dtype=float)
    shifted = scores - scores.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def log_loss(y, p, weights=None):
    """Mean binary cross-entropy; probabilities clipped away from {0,1}."""
    y = np.asarray(y, dtype=float)
    p = np.clip(np.asarray(p, dtype=float), PROB_EPS, 1.0 - PROB_EPS)
    ll = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    if weights is None:
        return float(ll.mean())
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(weights * ll) / np.sum(weights))


def multiclass_log_loss(labels, probs):
    """Mean categorical cross-entropy for integer labels against row-probabilities."""
    labels = np.asarray(labels, dtype=int)
    probs = np.asarray(probs, dtype=float)
    picked = np.clip(probs[np.arange(labels.size), labels], PROB_EPS, 1.0)
    return float(-np.log(picked).mean())
