"""Additive risk model: binned per-feature shape functions learned by cyclic
gradient boosting with inner/outer bagging, plus an optional per-diagnosis
offset term so the same machinery serves as outcome model f(x, d).

Binning is rank-based: cut points are actual training values picked at
equal-frequency ranks, so any strictly increasing transform applied
consistently at fit and predict time leaves the model's predictions unchanged.

Each boosting round visits every feature (and the diagnosis term last) in fixed
order and adds ``learning_rate * (bin-wise mean working residual)``, where the
proposed update is averaged over ``inner_bags`` bootstrap subsamples of the
round's data. ``outer_bags`` independent models are fit on bootstrap resamples
of the training set and averaged. Validation loss is tracked per round and the
snapshot at the best round is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cohort import Cohort
from .numerics import log_loss, logit, sigmoid


class GamError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Binning
# ---------------------------------------------------------------------------


@dataclass
class BinningSpec:
    cuts: list[np.ndarray]  # per feature: strictly increasing training values
    max_bins: int

    @property
    def n_features(self):
        return len(self.cuts)

    def n_bins(self, feature):
        return len(self.cuts[feature]) + 1

    def assign_column(self, feature, values):
        """Bin index per value; everything outside the cuts clamps to edge bins."""
        return np.searchsorted(self.cuts[feature], np.asarray(values, dtype=float),
                               side="right")

    def assign(self, features):
        features = np.atleast_2d(np.asarray(features, dtype=float))
        out = np.empty(features.shape, dtype=np.int32)
        for j in range(self.n_features):
            out[:, j] = self.assign_column(j, features[:, j])
        return out


def _column_cuts(values, max_bins):
    distinct = np.unique(values)
    if distinct.size <= 1:
        return np.array([], dtype=float)
    if distinct.size <= max_bins:
        return distinct[1:].astype(float)
    n = values.size
    ranks = np.ceil(np.arange(1, max_bins) * n / max_bins).astype(int) - 1
    candidates = np.sort(values)[ranks]
    cuts = np.unique(candidates)
    cuts = cuts[cuts > distinct[0]]
    if cuts.size == 0:
        cuts = distinct[1:2]
    return cuts.astype(float)


def bin_features(train: Cohort, max_bins=64) -> BinningSpec:
    """Equal-frequency cuts per feature, at most ``max_bins`` bins each."""
    if max_bins < 2:
        raise GamError("max_bins must be >= 2")
    if len(train) == 0:
        raise GamError("cannot bin an empty cohort")
    cuts = [_column_cuts(train.features[:, j], max_bins)
            for j in range(train.schema.n_features)]
    return BinningSpec(cuts, max_bins)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass
class ShapeFunction:
    feature: int
    contributions: np.ndarray
    bin_weights: np.ndarray  # training-frequency weight per bin


@dataclass
class GamModel:
    intercept: float
    shapes: list[ShapeFunction]
    binning: BinningSpec
    diagnosis_offsets: dict[int, float] = field(default_factory=dict)
    diagnosis_weights: Optional[np.ndarray] = None
    diagnosis_vocab: Optional[list[str]] = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return self.binning.n_features

    def base_scores(self, features):
        """Intercept plus shape contributions, no diagnosis term. Vectorized."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        if features.shape[1] != self.n_features:
            raise GamError(
                f"feature length {features.shape[1]} != model arity {self.n_features}"
            )
        scores = np.full(features.shape[0], self.intercept)
        for shape in self.shapes:
            bins = self.binning.assign_column(shape.feature, features[:, shape.feature])
            scores += shape.contributions[bins]
        return scores

    def offset_for(self, diagnosis):
        """(offset, unseen_flag): centered beta for a diagnosis, 0 when absent."""
        if diagnosis is None:
            return 0.0, False
        d = int(diagnosis)
        if d in self.diagnosis_offsets:
            return self.diagnosis_offsets[d], False
        return 0.0, True


def predict_gam(model: GamModel, features, diagnosis=None) -> float:
    """sigmoid(intercept + sum_j shape_j + beta(d)); beta = 0 when d is absent
    or unseen (the centered population-average offset)."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 1:
        raise GamError("predict_gam takes a single feature vector")
    offset, _ = model.offset_for(diagnosis)
    return float(sigmoid(model.base_scores(features[None, :])[0] + offset))


def predict_gam_detail(model: GamModel, features, diagnosis=None):
    """(probability, unseen_diagnosis_flag) for callers that record warnings."""
    features = np.asarray(features, dtype=float)
    offset, unseen = model.offset_for(diagnosis)
    prob = float(sigmoid(model.base_scores(features[None, :])[0] + offset))
    return prob, unseen


def predict_gam_batch(model: GamModel, features, diagnosis=None):
    scores = model.base_scores(features)
    if diagnosis is not None:
        diagnosis = np.asarray(diagnosis)
        offsets = np.array([model.offset_for(None if d < 0 else int(d))[0]
                            for d in diagnosis])
        scores = scores + offsets
    return sigmoid(scores)


def shape_curve(model: GamModel, feature):
    """The learned step function as ((lo, hi), contribution) pairs."""
    if not 0 <= feature < model.n_features:
        raise GamError(f"feature index {feature} out of range")
    cuts = model.binning.cuts[feature]
    shape = model.shapes[feature]
    edges = np.concatenate([[-np.inf], cuts, [np.inf]])
    return [
        ((float(edges[i]), float(edges[i + 1])), float(shape.contributions[i]))
        for i in range(len(shape.contributions))
    ]


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass
class GamConfig:
    use_diagnosis: bool = False
    inner_bags: int = 16
    outer_bags: int = 4
    learning_rate: float = 0.05
    max_rounds: int = 2000
    patience: Optional[int] = 50
    max_bins: int = 64
    seed: int = 0


class _TermData:
    """Precomputed per-term (feature or diagnosis) binned indices and keys."""

    def __init__(self, bins, n_bins, inner_bags):
        self.bins = bins.astype(np.int64)
        self.n_bins = n_bins
        # combined (inner bag, bin) key so one bincount aggregates all bags
        self.keys = (self.bins[None, :]
                     + n_bins * np.arange(inner_bags, dtype=np.int64)[:, None]).ravel()


def _fit_single_bag(y, terms, valid_y, valid_bins, config, rng):
    """One boosted model on (already resampled) rows; returns best-round state."""
    n = y.size
    base_rate = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    intercept = float(logit(base_rate))
    contribs = [np.zeros(t.n_bins) for t in terms]
    scores = np.full(n, intercept)

    track_valid = valid_y is not None
    if track_valid:
        val_scores = np.full(valid_y.size, intercept)
    best = {
        "loss": np.inf,
        "contribs": [c.copy() for c in contribs],
        "round": 0,
    }
    trace = []
    stall = 0
    nb = config.inner_bags
    w_buf = np.empty((nb, n))

    for rnd in range(1, config.max_rounds + 1):
        counts = np.zeros((nb, n))
        for b in range(nb):
            counts[b] = np.bincount(rng.integers(0, n, n), minlength=n)
        for t_idx, term in enumerate(terms):
            resid = y - sigmoid(scores)
            np.multiply(counts, resid[None, :], out=w_buf)
            num = np.bincount(term.keys, weights=w_buf.ravel(),
                              minlength=nb * term.n_bins).reshape(nb, term.n_bins)
            den = np.bincount(term.keys, weights=counts.ravel(),
                              minlength=nb * term.n_bins).reshape(nb, term.n_bins)
            ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
            update = config.learning_rate * ratio.mean(axis=0)
            contribs[t_idx] += update
            scores += update[term.bins]
            if track_valid:
                val_scores += update[valid_bins[t_idx]]
        if track_valid:
            val_loss = log_loss(valid_y, sigmoid(val_scores))
            trace.append(val_loss)
            if val_loss < best["loss"] - 1e-12:
                best = {
                    "loss": val_loss,
                    "contribs": [c.copy() for c in contribs],
                    "round": rnd,
                }
                stall = 0
            else:
                stall += 1
                if config.patience is not None and stall >= config.patience:
                    break

    if not track_valid or not np.isfinite(best["loss"]):
        best = {"loss": np.nan, "contribs": contribs, "round": config.max_rounds}
    return intercept, best["contribs"], best["round"], trace


def fit_gam(train: Cohort, valid: Optional[Cohort], config: GamConfig) -> GamModel:
    if len(train) == 0:
        raise GamError("training cohort is empty")
    if config.patience is not None and (valid is None or len(valid) == 0):
        raise GamError("early stopping (finite patience) needs a nonempty validation cohort")
    if config.use_diagnosis and (train.diagnosis < 0).any():
        raise GamError("use_diagnosis requires every training record to carry a diagnosis")
    if config.use_diagnosis and valid is not None and len(valid) and (valid.diagnosis < 0).any():
        raise GamError("use_diagnosis requires every validation record to carry a diagnosis")

    binning = bin_features(train, config.max_bins)
    full_bins = binning.assign(train.features)
    n_features = train.schema.n_features
    k = len(train.diagnosis_vocab)

    valid_y = None
    valid_bins_cols = None
    if valid is not None and len(valid):
        valid_y = valid.outcome.astype(float)
        vb = binning.assign(valid.features)
        valid_bins_cols = [vb[:, j] for j in range(n_features)]
        if config.use_diagnosis:
            valid_bins_cols.append(valid.diagnosis.astype(np.int64))

    ss = np.random.SeedSequence(config.seed)
    bag_rngs = [np.random.default_rng(s) for s in ss.spawn(config.outer_bags)]

    n = len(train)
    y_full = train.outcome.astype(float)
    bag_results = []
    for rng in bag_rngs:
        rows = rng.integers(0, n, n)
        terms = [
            _TermData(full_bins[rows, j], binning.n_bins(j), config.inner_bags)
            for j in range(n_features)
        ]
        if config.use_diagnosis:
            terms.append(_TermData(train.diagnosis[rows], k, config.inner_bags))
        bag_results.append(
            _fit_single_bag(y_full[rows], terms, valid_y, valid_bins_cols, config, rng)
        )

    intercept = float(np.mean([r[0] for r in bag_results]))
    shapes = []
    for j in range(n_features):
        avg = np.mean([r[1][j] for r in bag_results], axis=0)
        weights = np.bincount(full_bins[:, j], minlength=binning.n_bins(j)).astype(float)
        shapes.append(ShapeFunction(j, avg, weights))

    offsets: dict[int, float] = {}
    diag_weights = None
    if config.use_diagnosis:
        avg_beta = np.mean([r[1][n_features] for r in bag_results], axis=0)
        diag_weights = np.bincount(train.diagnosis, minlength=k).astype(float)
        mean_beta = float(avg_beta @ diag_weights / diag_weights.sum())
        avg_beta = avg_beta - mean_beta
        intercept += mean_beta
        offsets = {d: float(avg_beta[d]) for d in range(k)}

    # re-center shape functions on the training distribution
    for shape in shapes:
        total = shape.bin_weights.sum()
        mean_contrib = float(shape.contributions @ shape.bin_weights / total)
        shape.contributions = shape.contributions - mean_contrib
        intercept += mean_contrib

    metadata = {
        "rounds_used": [r[2] for r in bag_results],
        "validation_loss_trace": [r[3] for r in bag_results],
        "best_validation_loss": [
            (min(r[3]) if r[3] else None) for r in bag_results
        ],
        "inner_bags": config.inner_bags,
        "outer_bags": config.outer_bags,
        "learning_rate": config.learning_rate,
        "max_bins": config.max_bins,
        "use_diagnosis": config.use_diagnosis,
        "seed": config.seed,
    }
    return GamModel(
        intercept=float(intercept),
        shapes=shapes,
        binning=binning,
        diagnosis_offsets=offsets,
        diagnosis_weights=diag_weights,
        diagnosis_vocab=list(train.diagnosis_vocab) if config.use_diagnosis else None,
        metadata=metadata,
    )
