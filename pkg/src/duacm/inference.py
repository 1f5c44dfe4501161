"""Diagnosis-uncertainty inference: combine an outcome model f(x, d) with a
diagnosis model g(x) into a distribution of risks, summarized by its mean,
pessimistic quantiles, and per-diagnosis explanations, with interactive
rule-out / confirm sessions that reweight the diagnosis posterior live.

Two modes: ``sampled`` draws diagnoses from g(x) and maps each through f
(duplicates aggregated into weights); ``exact`` enumerates the whole
vocabulary with posterior weights, which removes Monte-Carlo jitter and is the
default inside sessions. Quantiles use the weighted lower-quantile convention:
the smallest risk whose cumulative weight reaches q.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .diagmodel import DiagnosisModel, predict_diagnosis, sample_diagnoses
from .gam import GamModel
from .numerics import sigmoid

_QUANTILE_TIE_EPS = 1e-12


class InferenceError(ValueError):
    pass


@dataclass
class DuConfig:
    mode: str = "sampled"
    n_samples: int = 150
    quantiles: tuple[float, ...] = (0.5, 0.9)
    seed: int = 0

    def validated(self):
        if self.mode not in ("sampled", "exact"):
            raise InferenceError(f"unknown mode {self.mode!r}")
        if self.mode == "sampled" and self.n_samples < 1:
            raise InferenceError("n_samples must be >= 1")
        if any(not 0.0 < q < 1.0 for q in self.quantiles):
            raise InferenceError("quantiles must lie strictly inside (0, 1)")
        return self


@dataclass
class RiskDistribution:
    mode: str
    diagnoses: np.ndarray     # diagnosis ids carrying weight (sampled: distinct draws)
    weights: np.ndarray       # sum to 1
    risks: np.ndarray         # conditional risk per entry
    mean: float
    quantiles: dict[float, float]
    n_samples: Optional[int]
    seed: Optional[int]
    warnings: list[str] = field(default_factory=list)

    @property
    def entries(self):
        return list(zip(self.diagnoses.tolist(), self.weights.tolist(),
                        self.risks.tolist()))


def weighted_lower_quantile(risks, weights, q):
    """Smallest risk whose cumulative weight reaches q (weighted lower quantile)."""
    risks = np.asarray(risks, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(risks, kind="mergesort")
    cum = np.cumsum(weights[order])
    idx = int(np.searchsorted(cum, q - _QUANTILE_TIE_EPS, side="left"))
    idx = min(idx, len(order) - 1)
    return float(risks[order[idx]])


def _build_distribution(mode, diagnoses, weights, risks, quantiles, n_samples, seed,
                        warnings):
    diagnoses = np.asarray(diagnoses, dtype=int)
    weights = np.asarray(weights, dtype=float)
    risks = np.asarray(risks, dtype=float)
    mean = float(weights @ risks)
    qs = {float(q): weighted_lower_quantile(risks, weights, q) for q in quantiles}
    return RiskDistribution(mode, diagnoses, weights, risks, mean, qs,
                            n_samples, seed, list(warnings))


def _conditional_risks(outcome_model: GamModel, diag_model: DiagnosisModel, features):
    """Risk per vocabulary diagnosis plus names of diagnoses missing an offset."""
    if outcome_model.diagnosis_vocab is not None:
        if list(outcome_model.diagnosis_vocab) != list(diag_model.vocabulary):
            raise InferenceError(
                "outcome and diagnosis models disagree on the diagnosis vocabulary"
            )
    base = float(outcome_model.base_scores(np.asarray(features, dtype=float)[None, :])[0])
    k = len(diag_model.vocabulary)
    offsets = np.zeros(k)
    missing = []
    for d in range(k):
        off, unseen = outcome_model.offset_for(d)
        offsets[d] = off
        if unseen:
            missing.append(diag_model.vocabulary[d])
    return sigmoid(base + offsets), missing


def du_predict(outcome_model: GamModel, diag_model: DiagnosisModel, features,
               config: Optional[DuConfig] = None) -> RiskDistribution:
    """Risk distribution induced by diagnosis uncertainty at a feature vector."""
    config = (config or DuConfig()).validated()
    features = np.asarray(features, dtype=float)
    posterior = predict_diagnosis(diag_model, features)
    risks_all, missing = _conditional_risks(outcome_model, diag_model, features)
    warnings = (
        [f"no diagnosis offset for {name}; using 0" for name in sorted(missing)]
        if missing else []
    )

    if config.mode == "exact":
        k = len(diag_model.vocabulary)
        return _build_distribution(
            "exact", np.arange(k), posterior.probabilities, risks_all,
            config.quantiles, None, None, warnings,
        )

    draws = sample_diagnoses(posterior, config.n_samples, config.seed)
    counts = np.bincount(draws, minlength=len(diag_model.vocabulary))
    present = np.flatnonzero(counts)
    weights = counts[present] / config.n_samples
    return _build_distribution(
        "sampled", present, weights, risks_all[present],
        config.quantiles, config.n_samples, config.seed, warnings,
    )


def pessimistic_delta(dist: RiskDistribution) -> float:
    """Q90 minus mean: the scalar summary of diagnosis-driven risk uncertainty."""
    if 0.9 not in dist.quantiles:
        raise InferenceError("distribution has no 0.9 quantile")
    return dist.quantiles[0.9] - dist.mean


@dataclass
class Explanation:
    entries: list[tuple[int, float, float]]  # (diagnosis, probability, risk), by prob desc
    drivers: list[int]                       # diagnosis ids flagged as risk drivers


def explain(dist: RiskDistribution, top_k=5, driver_threshold=0.05) -> Explanation:
    """Top-k diagnoses by posterior probability; flags risk drivers, i.e.
    entries at or above the distribution's Q90 with non-negligible probability."""
    q90 = dist.quantiles.get(0.9)
    if q90 is None:
        q90 = weighted_lower_quantile(dist.risks, dist.weights, 0.9)
    order = sorted(
        range(len(dist.diagnoses)),
        key=lambda i: (-dist.weights[i], dist.diagnoses[i]),
    )[: max(top_k, 0)]
    entries = [
        (int(dist.diagnoses[i]), float(dist.weights[i]), float(dist.risks[i]))
        for i in order
    ]
    drivers = [
        d for d, p, r in entries
        if r >= q90 - _QUANTILE_TIE_EPS and p >= driver_threshold
    ]
    return Explanation(entries, drivers)


# ---------------------------------------------------------------------------
# Rule-out sessions
# ---------------------------------------------------------------------------


@dataclass
class RuleOutSession:
    session_id: str
    features: np.ndarray
    vocabulary: list[str]
    base_posterior: np.ndarray         # g(d | x) before any exclusions
    conditional_risks: np.ndarray      # f(x, d) per vocabulary diagnosis (cached)
    quantiles: tuple[float, ...]
    excluded: set[int] = field(default_factory=set)
    confirmed: Optional[int] = None
    current: Optional[RiskDistribution] = None
    warnings: list[str] = field(default_factory=list)


def _session_weights(session: RuleOutSession):
    k = len(session.vocabulary)
    weights = session.base_posterior.copy()
    if session.confirmed is not None:
        mask = np.zeros(k)
        mask[session.confirmed] = 1.0
        return mask
    if session.excluded:
        weights[sorted(session.excluded)] = 0.0
    total = weights.sum()
    if total <= 0:
        raise InferenceError("no diagnosis with positive probability remains")
    return weights / total


def _refresh(session: RuleOutSession) -> RiskDistribution:
    weights = _session_weights(session)
    session.current = _build_distribution(
        "exact", np.arange(len(session.vocabulary)), weights,
        session.conditional_risks, session.quantiles, None, None, session.warnings,
    )
    return session.current


def open_session(outcome_model: GamModel, diag_model: DiagnosisModel, features,
                 config: Optional[DuConfig] = None,
                 session_id: Optional[str] = None) -> RuleOutSession:
    """Interactive per-patient state; always exact mode so updates are jitter-free."""
    config = (config or DuConfig(mode="exact")).validated()
    features = np.asarray(features, dtype=float)
    posterior = predict_diagnosis(diag_model, features)
    risks, missing = _conditional_risks(outcome_model, diag_model, features)
    session = RuleOutSession(
        session_id=session_id or uuid.uuid4().hex,
        features=features,
        vocabulary=list(diag_model.vocabulary),
        base_posterior=posterior.probabilities.copy(),
        conditional_risks=risks,
        quantiles=tuple(config.quantiles),
        warnings=[f"no diagnosis offset for {name}; using 0" for name in sorted(missing)],
    )
    _refresh(session)
    return session


def _check_known(session, diagnoses: Iterable[int]):
    k = len(session.vocabulary)
    for d in diagnoses:
        if not 0 <= int(d) < k:
            raise InferenceError(f"unknown diagnosis id {d}")


def rule_out(session: RuleOutSession, diagnoses) -> RiskDistribution:
    """Zero out the posterior of the given diagnoses and renormalize.

    Idempotent, and order-independent for disjoint sets. The session is left
    unchanged when the exclusion would remove every remaining diagnosis.
    """
    diagnoses = {int(d) for d in (diagnoses if isinstance(diagnoses, (set, list, tuple, np.ndarray)) else [diagnoses])}
    _check_known(session, diagnoses)
    if session.confirmed is not None and session.confirmed in diagnoses:
        raise InferenceError("cannot rule out the confirmed diagnosis")
    new_excluded = session.excluded | diagnoses
    support = session.base_posterior.copy()
    support[sorted(new_excluded)] = 0.0
    if session.confirmed is None and support.sum() <= 0:
        raise InferenceError("cannot exclude every diagnosis")
    session.excluded = new_excluded
    return _refresh(session)


def confirm(session: RuleOutSession, diagnosis) -> RiskDistribution:
    """Collapse the distribution onto one diagnosis (equivalent to excluding all
    others). The target must not have been ruled out."""
    d = int(diagnosis)
    _check_known(session, [d])
    if d in session.excluded:
        raise InferenceError(f"diagnosis {session.vocabulary[d]} was ruled out")
    session.confirmed = d
    return _refresh(session)


def reset(session: RuleOutSession) -> RiskDistribution:
    session.excluded = set()
    session.confirmed = None
    return _refresh(session)
