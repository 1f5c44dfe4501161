"""Statistical metrics: AUC with U-statistic standard errors, calibration with a
fixed-slope logistic recalibration intercept, Benjamini-Hochberg adjustment, and
Spearman rank correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .numerics import logit, sigmoid


class MetricError(ValueError):
    pass


@dataclass
class AucResult:
    auc: float
    standard_error: float
    n_pos: int
    n_neg: int


def _midranks(values):
    """Ranks 1..n with ties sharing their average rank."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> AucResult:
    """Mann-Whitney AUC (ties count half) with the Hanley-McNeil standard error."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise MetricError("scores and labels must have equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs at least one positive and one negative label")

    ranks = _midranks(scores)
    rank_sum_pos = ranks[labels == 1].sum()
    a = (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    q1 = a / (2.0 - a)
    q2 = 2.0 * a * a / (1.0 + a)
    var = (
        a * (1.0 - a)
        + (n_pos - 1) * (q1 - a * a)
        + (n_neg - 1) * (q2 - a * a)
    ) / (n_pos * n_neg)
    return AucResult(float(a), float(np.sqrt(max(var, 0.0))), n_pos, n_neg)


@dataclass
class CalibrationReport:
    bin_mean_predicted: list[float]
    bin_observed_rate: list[float]
    bin_count: list[int]
    intercept: float
    intercept_se: float
    p_value: float


def calibration_report(scores, labels, n_bins=10) -> CalibrationReport:
    """Equal-frequency reliability bins plus a fixed-slope recalibration intercept.

    The intercept is the MLE of ``a`` in ``P(y=1) = sigmoid(a + logit(score))``;
    a nonzero value means the score sheet is uniformly shifted on the log-odds
    scale (a base-rate shift). Its standard error is the usual asymptotic one.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.size != labels.size:
        raise MetricError("scores and labels must have equal length")
    if n_bins < 2:
        raise MetricError("n_bins must be >= 2")
    if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
        raise MetricError("scores must lie in [0, 1]")
    if not ((labels == 1).any() and (labels == 0).any()):
        raise MetricError("labels must contain both classes")

    order = np.argsort(scores, kind="mergesort")
    mean_pred, obs_rate, counts = [], [], []
    for chunk in np.array_split(order, n_bins):
        if chunk.size == 0:
            continue
        mean_pred.append(float(scores[chunk].mean()))
        obs_rate.append(float(labels[chunk].mean()))
        counts.append(int(chunk.size))

    offsets = logit(np.clip(scores, 1e-12, 1.0 - 1e-12))
    a = 0.0
    for _ in range(100):
        p = sigmoid(a + offsets)
        grad = float((labels - p).sum())
        info = float((p * (1.0 - p)).sum())
        step = grad / info
        a += step
        if abs(step) < 1e-12:
            break
    p = sigmoid(a + offsets)
    se = 1.0 / np.sqrt(float((p * (1.0 - p)).sum()))
    z = a / se
    p_value = float(2.0 * norm.sf(abs(z)))
    return CalibrationReport(mean_pred, obs_rate, counts, float(a), float(se), p_value)


def bh_adjust(p_values, alpha=0.05):
    """Benjamini-Hochberg step-up: returns (rejected index set, adjusted p-values).

    Adjusted values use the standard min-monotone transform, so
    ``rejected == {i : adjusted[i] <= alpha}``.
    """
    p = np.asarray(p_values, dtype=float)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise MetricError("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return set(), np.array([])
    order = np.argsort(p, kind="mergesort")
    sorted_p = p[order]
    scaled = sorted_p * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted_sorted = np.minimum(adjusted_sorted, 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted

    passing = np.flatnonzero(sorted_p <= alpha * np.arange(1, m + 1) / m)
    rejected = set()
    if passing.size:
        k = int(passing.max()) + 1
        rejected = set(int(i) for i in order[:k])
    return rejected, adjusted


def spearman_corr(a, b) -> float:
    """Pearson correlation of mid-ranks (average ranks on ties)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != b.size:
        raise MetricError("inputs must have equal length")
    if a.size < 3:
        raise MetricError("need at least 3 points")
    ra, rb = _midranks(a), _midranks(b)
    sa, sb = ra.std(), rb.std()
    if sa == 0.0 or sb == 0.0:
        raise MetricError("spearman correlation undefined for constant input")
    return float(((ra - ra.mean()) * (rb - rb.mean())).mean() / (sa * sb))
