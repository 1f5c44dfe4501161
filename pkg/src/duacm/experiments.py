"""Experiment harnesses: pooled-vs-diagnosis-specific AUC comparison,
out-of-diagnosis generalization with calibration testing, cross-model
prediction correlation, and a per-patient diagnosis-uncertainty summary.

All harnesses are deterministic given their seed; per-diagnosis work is done in
fixed diagnosis order with seeds spawned per diagnosis, so reports are
byte-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .cohort import CensusRow, Cohort, split
from .gam import GamConfig, GamModel, fit_gam, predict_gam_batch
from .inference import DuConfig, du_predict, pessimistic_delta
from .metrics import AucResult, auc, bh_adjust, calibration_report, spearman_corr


class ExperimentError(ValueError):
    pass


@dataclass
class HarnessConfig:
    gam: GamConfig = field(default_factory=lambda: GamConfig(
        inner_bags=8, outer_bags=2, learning_rate=0.15, max_rounds=300,
        patience=40, max_bins=32,
    ))
    valid_fraction: float = 0.15
    min_subset: int = 30          # smallest diagnosis subset worth fitting
    seed: int = 0


def _normalize_ids(d_common):
    ids = [r.diagnosis if isinstance(r, CensusRow) else int(r) for r in d_common]
    if not ids:
        raise ExperimentError("d_common is empty")
    return ids


def _fit_marginal_gam(pool: Cohort, config: HarnessConfig, seed: int) -> GamModel:
    """Feature-only model with a validation carve-out for early stopping."""
    gam_cfg = replace(config.gam, use_diagnosis=False, seed=seed)
    frac = config.valid_fraction
    train, valid, _ = split(pool, (1.0 - frac, frac, 0.0), seed=seed)
    if len(valid) == 0 or len(np.unique(valid.outcome)) < 2:
        gam_cfg = replace(gam_cfg, patience=None,
                          max_rounds=min(gam_cfg.max_rounds, 150))
        return fit_gam(pool, None, gam_cfg)
    return fit_gam(train, valid, gam_cfg)


def _splittable(subset: Cohort, min_subset: int):
    if len(subset) < min_subset:
        return f"only {len(subset)} records"
    if len(np.unique(subset.outcome)) < 2:
        return "single outcome class"
    train, _, test = split(subset, (0.8, 0.0, 0.2), seed=0)
    if len(np.unique(train.outcome)) < 2 or len(np.unique(test.outcome)) < 2:
        return "80/20 split loses an outcome class"
    return None


# ---------------------------------------------------------------------------
# Pooled model vs diagnosis-specific models
# ---------------------------------------------------------------------------


@dataclass
class AcmVsSpecificRow:
    diagnosis: int
    name: str
    n_train: int
    n_test: int
    auc_specific: Optional[AucResult]
    auc_acm: Optional[AucResult]
    skipped: Optional[str] = None


@dataclass
class AcmVsSpecificReport:
    rows: list[AcmVsSpecificRow]
    acm_global: AucResult
    mean_specific: float
    se_mean_specific: float
    mean_acm_on_subsets: float
    se_mean_acm_on_subsets: float


def run_acm_vs_specific(cohort: Cohort, d_common, config: Optional[HarnessConfig] = None
                        ) -> AcmVsSpecificReport:
    """Train one pooled feature-only model on everything outside the per-diagnosis
    test sets, one model per common diagnosis on that diagnosis's 80% train part,
    and compare held-out AUCs per diagnosis."""
    config = config or HarnessConfig()
    ids = _normalize_ids(d_common)
    ss = np.random.SeedSequence(config.seed)
    seeds = {d: int(s.generate_state(1)[0]) for d, s in zip(ids, ss.spawn(len(ids)))}
    acm_seed = int(ss.spawn(1)[0].generate_state(1)[0])

    subsets, rows, test_parts = {}, [], {}
    for d in ids:
        subset = cohort.subset(np.flatnonzero(cohort.diagnosis == d))
        reason = _splittable(subset, config.min_subset)
        if reason:
            rows.append(AcmVsSpecificRow(d, cohort.diagnosis_vocab[d], len(subset), 0,
                                         None, None, skipped=reason))
            continue
        train, _, test = split(subset, (0.8, 0.0, 0.2), seed=seeds[d])
        subsets[d] = (train, test)
        test_parts[d] = test

    test_ids = (np.concatenate([t.ids for t in test_parts.values()])
                if test_parts else np.array([], dtype=int))
    acm_pool = cohort.subset(np.flatnonzero(~np.isin(cohort.ids, test_ids)))
    acm_model = _fit_marginal_gam(acm_pool, config, acm_seed)

    spec_aucs, acm_aucs = [], []
    for d in ids:
        if d not in subsets:
            continue
        train, test = subsets[d]
        model = _fit_marginal_gam(train, config, seeds[d])
        a_spec = auc(predict_gam_batch(model, test.features), test.outcome)
        a_acm = auc(predict_gam_batch(acm_model, test.features), test.outcome)
        spec_aucs.append(a_spec.auc)
        acm_aucs.append(a_acm.auc)
        rows.append(AcmVsSpecificRow(d, cohort.diagnosis_vocab[d], len(train),
                                     len(test), a_spec, a_acm))

    if not spec_aucs:
        raise ExperimentError("no common diagnosis was large enough to evaluate")
    union_test_idx = np.flatnonzero(np.isin(cohort.ids, test_ids))
    union_test = cohort.subset(union_test_idx)
    acm_global = auc(predict_gam_batch(acm_model, union_test.features),
                     union_test.outcome)

    def mean_se(values):
        arr = np.asarray(values)
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        return float(arr.mean()), se

    mean_spec, se_spec = mean_se(spec_aucs)
    mean_acm, se_acm = mean_se(acm_aucs)
    return AcmVsSpecificReport(rows, acm_global, mean_spec, se_spec, mean_acm, se_acm)


# ---------------------------------------------------------------------------
# Out-of-diagnosis generalization
# ---------------------------------------------------------------------------


@dataclass
class OutOfDiagnosisRow:
    diagnosis: int
    name: str
    n: int
    auc_out: Optional[AucResult]
    auc_within: Optional[AucResult]
    cal_intercept: float = float("nan")
    cal_se: float = float("nan")
    p_value: float = float("nan")
    bh_rejected: bool = False
    shift_sign: int = 0
    cal_bins: Optional[list[tuple[float, float, int]]] = None
    skipped: Optional[str] = None


@dataclass
class OutOfDiagnosisReport:
    rows: list[OutOfDiagnosisRow]
    alpha: float


def run_out_of_diagnosis(cohort: Cohort, d_common, config: Optional[HarnessConfig] = None,
                         alpha=0.05) -> OutOfDiagnosisReport:
    """Leave-one-diagnosis-out transfer: the out-model is trained on everything
    except diagnosis d and evaluated on all of d, against a within-d model on
    d's own holdout; the out-model's calibration intercept on d is tested for a
    base-rate shift with Benjamini-Hochberg adjustment across diagnoses."""
    config = config or HarnessConfig()
    ids = _normalize_ids(d_common)
    ss = np.random.SeedSequence(config.seed)
    seeds = {d: int(s.generate_state(1)[0]) for d, s in zip(ids, ss.spawn(len(ids)))}

    rows = []
    evaluable = []
    for d in ids:
        subset_idx = np.flatnonzero(cohort.diagnosis == d)
        subset = cohort.subset(subset_idx)
        reason = _splittable(subset, config.min_subset)
        if reason:
            rows.append(OutOfDiagnosisRow(d, cohort.diagnosis_vocab[d], len(subset),
                                          None, None, skipped=reason))
            continue

        rest = cohort.subset(np.flatnonzero(cohort.diagnosis != d))
        out_model = _fit_marginal_gam(rest, config, seeds[d])
        out_preds = predict_gam_batch(out_model, subset.features)
        auc_out = auc(out_preds, subset.outcome)

        train, _, test = split(subset, (0.8, 0.0, 0.2), seed=seeds[d])
        within_model = _fit_marginal_gam(train, config, seeds[d] + 1)
        auc_within = auc(predict_gam_batch(within_model, test.features), test.outcome)

        cal = calibration_report(out_preds, subset.outcome)
        row = OutOfDiagnosisRow(
            d, cohort.diagnosis_vocab[d], len(subset), auc_out, auc_within,
            cal.intercept, cal.intercept_se, cal.p_value,
            shift_sign=int(np.sign(cal.intercept)),
            cal_bins=list(zip(cal.bin_mean_predicted, cal.bin_observed_rate,
                              cal.bin_count)),
        )
        rows.append(row)
        evaluable.append(row)

    if not evaluable:
        raise ExperimentError("no common diagnosis was large enough to evaluate")
    rejected, _ = bh_adjust([r.p_value for r in evaluable], alpha)
    for i, row in enumerate(evaluable):
        row.bh_rejected = i in rejected
    return OutOfDiagnosisReport(rows, alpha)


# ---------------------------------------------------------------------------
# Cross-model prediction correlation
# ---------------------------------------------------------------------------


@dataclass
class CrossCorrelationReport:
    diagnoses: list[int]
    names: list[str]
    matrix: np.ndarray
    mean_diagonal: float
    mean_off_diagonal: float


def run_cross_model_correlation(cohort: Cohort, d_common, heldout: Cohort,
                                config: Optional[HarnessConfig] = None
                                ) -> CrossCorrelationReport:
    """Rank correlation of per-diagnosis models' predictions on patients outside
    the common set; diagonal entries correlate two bootstrap refits of the same
    model, giving the self-agreement reference."""
    config = config or HarnessConfig()
    ids = _normalize_ids(d_common)
    if len(heldout) == 0:
        raise ExperimentError("heldout cohort is empty (every diagnosis is in d_common?)")
    if np.isin(heldout.diagnosis, ids).any():
        raise ExperimentError("heldout cohort must only contain diagnoses outside d_common")

    ss = np.random.SeedSequence(config.seed)
    spawned = ss.spawn(len(ids))
    usable, preds, boot_pairs, names = [], [], [], []
    for d, child in zip(ids, spawned):
        subset = cohort.subset(np.flatnonzero(cohort.diagnosis == d))
        if len(subset) < config.min_subset or len(np.unique(subset.outcome)) < 2:
            continue
        seed_main, seed_b1, seed_b2 = [int(s.generate_state(1)[0]) for s in child.spawn(3)]
        model = _fit_marginal_gam(subset, config, seed_main)
        preds.append(predict_gam_batch(model, heldout.features))

        boots = []
        for bseed in (seed_b1, seed_b2):
            rng = np.random.default_rng(bseed)
            rows = rng.integers(0, len(subset), len(subset))
            if len(np.unique(subset.outcome[rows])) < 2:
                rows[0] = int(np.flatnonzero(subset.outcome != subset.outcome[rows][0])[0])
            resampled = subset.resample(rows)
            bmodel = _fit_marginal_gam(resampled, config, bseed)
            boots.append(predict_gam_batch(bmodel, heldout.features))
        boot_pairs.append(boots)
        usable.append(d)
        names.append(cohort.diagnosis_vocab[d])

    m = len(usable)
    if m == 0:
        raise ExperimentError("no common diagnosis was large enough to evaluate")
    matrix = np.eye(m)
    for i in range(m):
        matrix[i, i] = spearman_corr(boot_pairs[i][0], boot_pairs[i][1])
        for j in range(i + 1, m):
            rho = spearman_corr(preds[i], preds[j])
            matrix[i, j] = matrix[j, i] = rho
    diag = np.diag(matrix)
    off = matrix[~np.eye(m, dtype=bool)]
    return CrossCorrelationReport(
        usable, names, matrix, float(diag.mean()),
        float(off.mean()) if off.size else float("nan"),
    )


# ---------------------------------------------------------------------------
# Diagnosis-uncertainty summary (per-patient deltas for reporting)
# ---------------------------------------------------------------------------


@dataclass
class DuSummaryRow:
    patient_id: int
    mean: float
    q50: float
    q90: float
    delta: float
    true_diagnosis: Optional[int]


@dataclass
class DuSummaryReport:
    rows: list[DuSummaryRow]
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray


def du_summary(outcome_model, diag_model, cohort: Cohort, n_bins=25) -> DuSummaryReport:
    """Exact-mode mean/median/Q90/pessimistic delta for every patient, plus the
    delta histogram."""
    rows = []
    for i in range(len(cohort)):
        dist = du_predict(outcome_model, diag_model, cohort.features[i],
                          DuConfig(mode="exact"))
        d = int(cohort.diagnosis[i])
        rows.append(DuSummaryRow(
            int(cohort.ids[i]), dist.mean, dist.quantiles[0.5], dist.quantiles[0.9],
            pessimistic_delta(dist), None if d < 0 else d,
        ))
    deltas = np.array([r.delta for r in rows]) if rows else np.array([0.0])
    lo = min(0.0, float(deltas.min()))
    hi = max(float(deltas.max()), lo + 1e-6)
    edges = np.linspace(lo, hi + 1e-9, n_bins + 1)
    counts, _ = np.histogram(deltas, bins=edges)
    return DuSummaryReport(rows, edges, counts)
