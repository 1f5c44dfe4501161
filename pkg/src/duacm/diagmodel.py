"""Multiclass diagnosis classifier: a two-hidden-layer (64 unit, tanh) softmax
network trained from scratch with momentum SGD.

Determinism contract: fixed seed fixes initialization, batch order, and the
learning-rate schedule, so refits are bit-identical. The schedule guarantees a
non-increasing training loss trace: an epoch whose full-batch objective rises
is rolled back and retried at half the learning rate. Weight decay is plain L2
on every parameter. Hyperparameters (learning rate, weight decay) are chosen on
a validation set, then the model is retrained on train+valid combined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort
from .metrics import AucResult, auc
from .numerics import multiclass_log_loss, softmax_rows


class DiagmodelError(ValueError):
    pass


HIDDEN_UNITS = (64, 64)
DEFAULT_GRID = {
    "learning_rates": [0.1, 0.03, 0.01],
    "weight_decays": [0.0, 1e-4, 1e-3],
}
MIN_LEARNING_RATE = 1e-6


@dataclass
class DiagnosisDistribution:
    probabilities: np.ndarray
    vocabulary: list[str]


@dataclass
class DiagnosisModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    standardization: tuple[np.ndarray, np.ndarray]
    vocabulary: list[str]
    metadata: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return self.weights[0].shape[0]

    def standardize(self, features):
        mean, sd = self.standardization
        return (np.atleast_2d(np.asarray(features, dtype=float)) - mean) / sd

    def forward(self, x_std):
        h = x_std
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
        return softmax_rows(h @ self.weights[-1] + self.biases[-1])


# ---------------------------------------------------------------------------
# Core network math (kept as plain functions so gradients are easy to verify)
# ---------------------------------------------------------------------------


def init_params(n_features, n_classes, rng, hidden=HIDDEN_UNITS):
    """Fan-in scaled uniform initialization."""
    sizes = [n_features, *hidden, n_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def network_loss_and_gradients(weights, biases, x_std, labels, weight_decay):
    """Mean cross-entropy + (wd/2)*||params||^2 and its analytic gradients."""
    n = x_std.shape[0]
    activations = [x_std]
    h = x_std
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.tanh(h @ w + b)
        activations.append(h)
    logits = h @ weights[-1] + biases[-1]
    probs = softmax_rows(logits)
    loss = multiclass_log_loss(labels, probs)
    if weight_decay:
        loss += 0.5 * weight_decay * (
            sum(float((w * w).sum()) for w in weights)
            + sum(float((b * b).sum()) for b in biases)
        )

    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta + weight_decay * weights[layer]
        grad_b[layer] = delta.sum(axis=0) + weight_decay * biases[layer]
        if layer > 0:
            delta = (delta @ weights[layer].T) * (1.0 - activations[layer] ** 2)
    return loss, grad_w, grad_b


def _full_objective(weights, biases, x_std, labels, weight_decay):
    h = x_std
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.tanh(h @ w + b)
    probs = softmax_rows(h @ weights[-1] + biases[-1])
    loss = multiclass_log_loss(labels, probs)
    if weight_decay:
        loss += 0.5 * weight_decay * (
            sum(float((w * w).sum()) for w in weights)
            + sum(float((b * b).sum()) for b in biases)
        )
    return loss


def _train_network(x_std, labels, n_classes, lr, weight_decay, epochs, batch_size, rng):
    """Momentum SGD with rollback-and-halve on any training-loss increase."""
    weights, biases = init_params(x_std.shape[1], n_classes, rng)
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    momentum = 0.9
    n = x_std.shape[0]
    loss_trace = [_full_objective(weights, biases, x_std, labels, weight_decay)]

    for _ in range(epochs):
        snapshot = ([w.copy() for w in weights], [b.copy() for b in biases])
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            _, gw, gb = network_loss_and_gradients(
                weights, biases, x_std[idx], labels[idx], weight_decay
            )
            for layer in range(len(weights)):
                vel_w[layer] = momentum * vel_w[layer] - lr * gw[layer]
                vel_b[layer] = momentum * vel_b[layer] - lr * gb[layer]
                weights[layer] += vel_w[layer]
                biases[layer] += vel_b[layer]
        loss = _full_objective(weights, biases, x_std, labels, weight_decay)
        if loss > loss_trace[-1]:
            weights, biases = snapshot
            vel_w = [np.zeros_like(w) for w in weights]
            vel_b = [np.zeros_like(b) for b in biases]
            lr = max(lr * 0.5, MIN_LEARNING_RATE)
            loss_trace.append(loss_trace[-1])
        else:
            loss_trace.append(loss)
    return weights, biases, loss_trace


# ---------------------------------------------------------------------------
# Fitting and inference
# ---------------------------------------------------------------------------


def _check_labeled(cohort, what):
    if (cohort.diagnosis < 0).any():
        raise DiagmodelError(f"{what} contains records without a diagnosis")


def fit_mlp(train: Cohort, valid: Cohort, grid=None, epochs=200, batch_size=128,
            seed=0) -> DiagnosisModel:
    """Grid-search (lr, weight decay) on the validation set, then retrain on the
    combined train+valid data for the same epoch budget."""
    grid = dict(DEFAULT_GRID if grid is None else grid)
    if not grid.get("learning_rates") or not grid.get("weight_decays"):
        raise DiagmodelError("hyperparameter grid must be nonempty")
    _check_labeled(train, "training cohort")
    _check_labeled(valid, "validation cohort")
    vocab = train.diagnosis_vocab
    n_classes = len(vocab)
    present = np.bincount(train.diagnosis, minlength=n_classes)
    if (present == 0).any():
        missing = [vocab[i] for i in np.flatnonzero(present == 0)][:5]
        raise DiagmodelError(f"vocabulary diagnoses absent from training data: {missing}")

    mean = train.features.mean(axis=0)
    sd = train.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    x_train = (train.features - mean) / sd
    x_valid = (valid.features - mean) / sd
    y_train = train.diagnosis
    y_valid = valid.diagnosis

    cells = [(lr, wd) for lr in grid["learning_rates"] for wd in grid["weight_decays"]]
    ss = np.random.SeedSequence(seed)
    cell_seeds = ss.spawn(len(cells) + 1)

    cell_losses = []
    best = None
    for (lr, wd), child in zip(cells, cell_seeds[:-1]):
        rng = np.random.default_rng(child)
        weights, biases, _ = _train_network(
            x_train, y_train, n_classes, lr, wd, epochs, batch_size, rng
        )
        h = x_valid
        for w, b in zip(weights[:-1], biases[:-1]):
            h = np.tanh(h @ w + b)
        val_loss = multiclass_log_loss(y_valid, softmax_rows(h @ weights[-1] + biases[-1]))
        cell_losses.append(((lr, wd), val_loss))
        if best is None or val_loss < best[1]:
            best = ((lr, wd), val_loss)

    (best_lr, best_wd), best_val = best
    x_all = np.vstack([x_train, x_valid])
    y_all = np.concatenate([y_train, y_valid])
    rng = np.random.default_rng(cell_seeds[-1])
    weights, biases, trace = _train_network(
        x_all, y_all, n_classes, best_lr, best_wd, epochs, batch_size, rng
    )
    return DiagnosisModel(
        weights=weights,
        biases=biases,
        standardization=(mean, sd),
        vocabulary=list(vocab),
        metadata={
            "learning_rate": best_lr,
            "weight_decay": best_wd,
            "validation_loss": best_val,
            "grid_losses": [
                {"learning_rate": lr, "weight_decay": wd, "loss": loss}
                for (lr, wd), loss in cell_losses
            ],
            "train_loss_trace": trace,
            "epochs": epochs,
            "batch_size": batch_size,
            "seed": seed,
        },
    )


def predict_diagnosis(model: DiagnosisModel, features) -> DiagnosisDistribution:
    features = np.asarray(features, dtype=float)
    if features.ndim != 1 or features.size != model.n_features:
        raise DiagmodelError(
            f"expected a feature vector of length {model.n_features}"
        )
    if not np.isfinite(features).all():
        raise DiagmodelError("non-finite feature values")
    probs = model.forward(model.standardize(features))[0]
    return DiagnosisDistribution(probs, model.vocabulary)


def predict_diagnosis_batch(model: DiagnosisModel, features) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[1] != model.n_features:
        raise DiagmodelError(f"expected feature vectors of length {model.n_features}")
    if not np.isfinite(features).all():
        raise DiagmodelError("non-finite feature values")
    return model.forward(model.standardize(features))


def sample_diagnoses(dist: DiagnosisDistribution, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise DiagmodelError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.choice(len(dist.probabilities), size=n, p=dist.probabilities)


@dataclass
class OneVsAllResult:
    per_diagnosis: dict[int, AucResult]
    macro_auc: float
    skipped: list[int]


def one_vs_all_auc(model: DiagnosisModel, test: Cohort) -> OneVsAllResult:
    """AUC of p(c|x) against indicator(d = c), per evaluable class."""
    _check_labeled(test, "test cohort")
    probs = predict_diagnosis_batch(model, test.features)
    per: dict[int, AucResult] = {}
    skipped = []
    for c in range(len(model.vocabulary)):
        labels = (test.diagnosis == c).astype(int)
        if labels.sum() == 0 or labels.sum() == labels.size:
            skipped.append(c)
            continue
        per[c] = auc(probs[:, c], labels)
    if not per:
        raise DiagmodelError("no evaluable diagnosis classes in test cohort")
    macro = float(np.mean([r.auc for r in per.values()]))
    return OneVsAllResult(per, macro, skipped)
