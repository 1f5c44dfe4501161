"""Synthetic patient cohorts with known ground truth, plus cohort I/O and splitting.

The generating process: a latent patient state ``z ~ Normal(0, I)`` drives three
observables. A diagnosis is drawn from a softmax over affine scores of ``z``
(confusable pairs share a score direction and are separated, if at all, by an
orthogonal component scaled by their ``separation``). Features are per-feature
monotone nonlinear maps of single latent coordinates plus Gaussian noise. The
binary outcome is Bernoulli with log-odds ``risk_weights . z + beta_true[d]``.

Because every parameter is derived deterministically from the CohortSpec, the module
can also act as an oracle: exact conditional risks given the latent state, and
importance-sampling estimates of posteriors given features only.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .numerics import sigmoid, softmax_rows

FORMAT_MAGIC = "#cohort-v1"


class CohortError(ValueError):
    """Raised for invalid cohort specs, malformed files, or schema mismatches."""


# ---------------------------------------------------------------------------
# Spec and domain types
# ---------------------------------------------------------------------------


@dataclass
class CohortSpec:
    """Parameters of the synthetic generating process.

    ``confusable_pairs`` holds ``(diagnosis_a, diagnosis_b, separation)`` triples;
    separation 0 makes the two diagnoses observationally identical given features.
    ``beta_true`` maps diagnosis id to its true log-odds offset (missing ids get 0).
    """

    n_patients: int
    n_features: int
    latent_dim: int
    n_diagnoses: int
    zipf_exponent: float = 1.2
    confusable_pairs: Sequence[tuple[int, int, float]] = ()
    beta_true: dict[int, float] = field(default_factory=dict)
    risk_weights: Sequence[float] = ()
    feature_noise_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.risk_weights:
            self.risk_weights = tuple(0.0 for _ in range(self.latent_dim))
        self.risk_weights = tuple(float(w) for w in self.risk_weights)
        self.confusable_pairs = tuple(
            (int(a), int(b), float(s)) for a, b, s in self.confusable_pairs
        )
        self.beta_true = {int(k): float(v) for k, v in self.beta_true.items()}

    def validate(self):
        if self.n_patients < 1:
            raise CohortError("n_patients must be >= 1")
        if self.n_features < 1:
            raise CohortError("n_features must be >= 1")
        if self.latent_dim < 1:
            raise CohortError("latent_dim must be >= 1")
        if self.n_diagnoses < 1:
            raise CohortError("n_diagnoses must be >= 1")
        if self.zipf_exponent <= 0:
            raise CohortError("zipf_exponent must be positive")
        if self.feature_noise_sd < 0:
            raise CohortError("feature_noise_sd must be >= 0")
        if len(self.risk_weights) != self.latent_dim:
            raise CohortError("risk_weights length must equal latent_dim")
        for a, b, sep in self.confusable_pairs:
            if not (0 <= a < self.n_diagnoses and 0 <= b < self.n_diagnoses):
                raise CohortError(
                    f"confusable_pairs references diagnosis ({a}, {b}) outside "
                    f"[0, {self.n_diagnoses})"
                )
            if a == b:
                raise CohortError(f"confusable pair ({a}, {b}) must name two diagnoses")
            if sep < 0:
                raise CohortError(f"separation must be >= 0, got {sep}")
        for d in self.beta_true:
            if not 0 <= d < self.n_diagnoses:
                raise CohortError(f"beta_true references unknown diagnosis {d}")

    def cache_key(self):
        return (
            self.n_features,
            self.latent_dim,
            self.n_diagnoses,
            self.zipf_exponent,
            self.confusable_pairs,
            tuple(sorted(self.beta_true.items())),
            self.risk_weights,
            self.feature_noise_sd,
            self.seed,
        )


@dataclass
class FeatureSchema:
    names: list[str]
    ranges: list[tuple[float, float]]

    @property
    def n_features(self):
        return len(self.names)

    def __eq__(self, other):
        return (
            isinstance(other, FeatureSchema)
            and self.names == other.names
            and all(a == b for a, b in zip(self.ranges, other.ranges))
            and len(self.ranges) == len(other.ranges)
        )


@dataclass
class PatientRecord:
    id: int
    features: np.ndarray
    diagnosis: int | None
    outcome: int
    latent_state: np.ndarray | None = None


class Cohort:
    """Column-oriented store of patient records plus schema and vocabulary.

    ``diagnosis`` uses -1 internally for records without a label. Instances are
    immutable after construction and safe to share across threads.
    """

    def __init__(self, schema, records_ids, features, diagnosis, outcome,
                 latent, diagnosis_vocab):
        self.schema = schema
        self.ids = np.asarray(records_ids, dtype=int)
        self.features = np.asarray(features, dtype=float)
        self.diagnosis = np.asarray(diagnosis, dtype=int)
        self.outcome = np.asarray(outcome, dtype=int)
        self.latent = None if latent is None else np.asarray(latent, dtype=float)
        self.diagnosis_vocab = list(diagnosis_vocab)
        self._validate()

    def _validate(self):
        n = len(self.ids)
        if self.features.shape != (n, self.schema.n_features):
            raise CohortError("feature matrix shape does not match schema")
        if len(np.unique(self.ids)) != n:
            raise CohortError("duplicate record ids")
        labeled = self.diagnosis[self.diagnosis >= 0]
        if labeled.size and labeled.max() >= len(self.diagnosis_vocab):
            bad = int(labeled.max())
            raise CohortError(f"record diagnosis {bad} not in vocabulary")
        if not np.isin(self.outcome, (0, 1)).all():
            raise CohortError("outcomes must be 0 or 1")

    @classmethod
    def from_records(cls, schema, records, diagnosis_vocab):
        ids = [r.id for r in records]
        feats = np.array([r.features for r in records], dtype=float).reshape(
            len(records), schema.n_features
        )
        diag = [(-1 if r.diagnosis is None else r.diagnosis) for r in records]
        outc = [r.outcome for r in records]
        latents = [r.latent_state for r in records]
        latent = None
        if records and all(l is not None for l in latents):
            latent = np.array(latents, dtype=float)
        return cls(schema, ids, feats, diag, outc, latent, diagnosis_vocab)

    def __len__(self):
        return len(self.ids)

    @property
    def has_latent(self):
        return self.latent is not None

    @property
    def mortality(self):
        return float(self.outcome.mean()) if len(self) else 0.0

    def record(self, i) -> PatientRecord:
        d = int(self.diagnosis[i])
        return PatientRecord(
            id=int(self.ids[i]),
            features=self.features[i],
            diagnosis=None if d < 0 else d,
            outcome=int(self.outcome[i]),
            latent_state=None if self.latent is None else self.latent[i],
        )

    def records(self) -> Iterator[PatientRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def subset(self, idx) -> "Cohort":
        idx = np.asarray(idx, dtype=int)
        return Cohort(
            self.schema,
            self.ids[idx],
            self.features[idx],
            self.diagnosis[idx],
            self.outcome[idx],
            None if self.latent is None else self.latent[idx],
            self.diagnosis_vocab,
        )

    def resample(self, idx) -> "Cohort":
        """Row selection that may repeat rows (bootstrap); ids are reassigned."""
        idx = np.asarray(idx, dtype=int)
        return Cohort(
            self.schema,
            np.arange(idx.size),
            self.features[idx],
            self.diagnosis[idx],
            self.outcome[idx],
            None if self.latent is None else self.latent[idx],
            self.diagnosis_vocab,
        )

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        latent_equal = (self.latent is None) == (other.latent is None) and (
            self.latent is None or np.array_equal(self.latent, other.latent)
        )
        return (
            self.schema == other.schema
            and self.diagnosis_vocab == other.diagnosis_vocab
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.diagnosis, other.diagnosis)
            and np.array_equal(self.outcome, other.outcome)
            and latent_equal
        )


# ---------------------------------------------------------------------------
# Generator parameters (all derived deterministically from the CohortSpec)
# ---------------------------------------------------------------------------

_DIAG_SIGNAL_GAIN = 2.0
_PARAMS_CACHE: dict[tuple, "GeneratorParams"] = {}


@dataclass
class GeneratorParams:
    score_matrix: np.ndarray      # (K, L) affine diagnosis-score directions
    score_offsets: np.ndarray     # (K,) calibrated so the marginal matches the prior
    prior: np.ndarray             # (K,) Zipf target
    feature_axis: np.ndarray      # (p,) latent coordinate feeding each feature
    lin_coef: np.ndarray          # (p,) affine part of the monotone map
    tanh_coef: np.ndarray         # (p,) tanh amplitude
    tanh_gain: np.ndarray         # (p,) tanh input gain
    beta: np.ndarray              # (K,) true log-odds offsets (0 where unspecified)
    risk_weights: np.ndarray      # (L,)


def zipf_prior(n_diagnoses, exponent):
    """Normalized Zipf mass over diagnosis ids 0..K-1 (id = frequency rank)."""
    raw = (np.arange(1, n_diagnoses + 1, dtype=float)) ** (-float(exponent))
    return raw / raw.sum()


def _calibrate_offsets(score_matrix, prior, rng):
    """Fixed-point calibration of softmax offsets so E_z[softmax] hits the prior.

    Uses a fixed Monte-Carlo sample of latent draws; the sample size shrinks for
    very large vocabularies where only the qualitative tail shape matters. A
    cheap warm start on a subsample keeps the expensive full-sample iteration
    count low.
    """
    k, latent_dim = score_matrix.shape
    log_prior = np.log(prior)
    chunk = 1 << 16

    def mean_softmax(sample, c):
        mean_p = np.zeros(k)
        for lo in range(0, sample.shape[0], chunk):
            s = sample[lo:lo + chunk] @ score_matrix.T + c
            mean_p += softmax_rows(s).sum(axis=0)
        return mean_p / sample.shape[0]

    def log_fixed_point(sample, c, max_iter, tol):
        for _ in range(max_iter):
            step = log_prior - np.log(mean_softmax(sample, c))
            c = c + step
            if np.abs(step).max() < tol:
                break
        return c

    if k > 256:
        # Long-tail vocabularies only need the qualitative head/tail shape; a
        # small sample and loose tolerance keep this fast.
        z = rng.standard_normal((1 << 13, latent_dim))
        return log_fixed_point(z, log_prior.copy(), 80, 1e-4)

    m = int(np.clip((1 << 25) // max(k, 1), 1 << 14, 1 << 19))
    z = rng.standard_normal((m, latent_dim))
    c = log_fixed_point(z[: min(m, 1 << 13)], log_prior.copy(), 300, 1e-7)

    # Newton refinement: residual on the full sample, Jacobian of the softmax
    # marginal on a subsample (the map is singular along the all-ones gauge
    # direction, handled by least squares).
    zj = z[: min(m, 1 << 16)]
    for _ in range(25):
        resid = prior - mean_softmax(z, c)
        if np.abs(resid / prior).max() < 1e-8:
            break
        q = softmax_rows(zj @ score_matrix.T + c)
        jac = np.diag(q.mean(axis=0)) - (q.T @ q) / zj.shape[0]
        step = np.linalg.lstsq(jac, resid, rcond=None)[0]
        scale = np.abs(step).max()
        if scale > 2.0:
            step *= 2.0 / scale
        c = c + step
    return c


def generator_params(spec: CohortSpec) -> GeneratorParams:
    spec.validate()
    key = spec.cache_key()
    if key in _PARAMS_CACHE:
        return _PARAMS_CACHE[key]

    ss = np.random.SeedSequence(spec.seed)
    rng_params, rng_cal, _ = [np.random.default_rng(s) for s in ss.spawn(3)]

    k, latent_dim, p = spec.n_diagnoses, spec.latent_dim, spec.n_features
    directions = rng_params.standard_normal((k, latent_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    score = _DIAG_SIGNAL_GAIN * directions
    # Confusable pairs: the second member reuses the first member's direction and
    # differs only by an orthogonal component of magnitude `separation`.
    for a, b, sep in spec.confusable_pairs:
        base = score[a]
        w = rng_params.standard_normal(latent_dim)
        nb = np.linalg.norm(base)
        if nb > 0:
            w = w - (w @ base) / nb**2 * base
        wn = np.linalg.norm(w)
        w = w / wn if wn > 0 else w
        score[b] = base + sep * w

    prior = zipf_prior(k, spec.zipf_exponent)
    offsets = _calibrate_offsets(score, prior, rng_cal)

    # Mostly-saturating monotone maps: the inverse (latent given feature) is
    # genuinely curved, so additive models with nonlinear shapes have an edge
    # over linear ones while the map stays strictly increasing.
    feature_axis = np.arange(p) % latent_dim
    lin_coef = rng_params.uniform(0.05, 0.15, size=p)
    tanh_coef = rng_params.uniform(1.2, 2.2, size=p)
    tanh_gain = rng_params.uniform(2.5, 3.5, size=p)

    beta = np.zeros(k)
    for d, v in spec.beta_true.items():
        beta[d] = v

    params = GeneratorParams(
        score_matrix=score,
        score_offsets=offsets,
        prior=prior,
        feature_axis=feature_axis,
        lin_coef=lin_coef,
        tanh_coef=tanh_coef,
        tanh_gain=tanh_gain,
        beta=beta,
        risk_weights=np.asarray(spec.risk_weights, dtype=float),
    )
    if len(_PARAMS_CACHE) > 16:
        _PARAMS_CACHE.clear()
    _PARAMS_CACHE[key] = params
    return params


def _feature_map(params: GeneratorParams, z: np.ndarray) -> np.ndarray:
    """Noise-free monotone feature map of the latent state (rows of z)."""
    t = z[:, params.feature_axis]
    return params.lin_coef * t + params.tanh_coef * np.tanh(params.tanh_gain * t)


def _invert_feature_scalar(params, j, value):
    """Invert the strictly increasing scalar map of feature j by bisection."""
    a, b, g = params.lin_coef[j], params.tanh_coef[j], params.tanh_gain[j]

    def f(t):
        return a * t + b * np.tanh(g * t) - value

    lo, hi = -60.0, 60.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def generate_cohort(spec: CohortSpec) -> Cohort:
    """Draw a cohort from the latent-state process; fixed seed fixes every byte."""
    spec.validate()
    params = generator_params(spec)
    ss = np.random.SeedSequence(spec.seed)
    rng = np.random.default_rng(ss.spawn(3)[2])

    n, latent_dim, p, k = spec.n_patients, spec.latent_dim, spec.n_features, spec.n_diagnoses
    z = rng.standard_normal((n, latent_dim))
    u_diag = rng.random(n)
    u_out = rng.random(n)
    noise = rng.standard_normal((n, p)) * spec.feature_noise_sd

    # Diagnosis draws via inverse-CDF against row-wise softmax, chunked to keep
    # the (n x K) probability block small for long-tail vocabularies.
    diagnosis = np.empty(n, dtype=int)
    chunk = max(1, (1 << 22) // max(k, 1))
    for lo in range(0, n, chunk):
        zc = z[lo:lo + chunk]
        probs = softmax_rows(zc @ params.score_matrix.T + params.score_offsets)
        cum = np.cumsum(probs, axis=1)
        cum[:, -1] = 1.0
        diagnosis[lo:lo + chunk] = np.minimum(
            (cum < u_diag[lo:lo + chunk, None]).sum(axis=1), k - 1
        )

    risk_logit = z @ params.risk_weights + params.beta[diagnosis]
    outcome = (u_out < sigmoid(risk_logit)).astype(int)
    features = _feature_map(params, z) + noise

    names = [f"f{j:02d}" for j in range(p)]
    ranges = [(float(features[:, j].min()), float(features[:, j].max())) for j in range(p)]
    vocab = [f"d{d:03d}" for d in range(k)]
    return Cohort(
        FeatureSchema(names, ranges),
        np.arange(n),
        features,
        diagnosis,
        outcome,
        z,
        vocab,
    )


# ---------------------------------------------------------------------------
# Oracles (exact given the latent state; importance sampling given features)
# ---------------------------------------------------------------------------


def true_risk(spec: CohortSpec, latent_state, diagnosis: int) -> float:
    """Exact outcome probability for a latent state and diagnosis."""
    if not 0 <= int(diagnosis) < spec.n_diagnoses:
        raise CohortError(f"unknown diagnosis {diagnosis}")
    params = generator_params(spec)
    z = np.asarray(latent_state, dtype=float)
    return float(sigmoid(z @ params.risk_weights + params.beta[int(diagnosis)]))


def diagnosis_posterior_given_latent(spec: CohortSpec, latent_state) -> np.ndarray:
    params = generator_params(spec)
    z = np.atleast_2d(np.asarray(latent_state, dtype=float))
    return softmax_rows(z @ params.score_matrix.T + params.score_offsets)[0]


def oracle_marginal_risk_given_latent(spec: CohortSpec, latent_state) -> float:
    """Law-of-total-probability mixture of conditional risks at a known latent state."""
    params = generator_params(spec)
    post = diagnosis_posterior_given_latent(spec, latent_state)
    z = np.asarray(latent_state, dtype=float)
    risks = sigmoid(float(z @ params.risk_weights) + params.beta)
    return float(post @ risks)


def _latent_importance_sample(spec, params, x, n_draws, seed):
    """Self-normalized importance sample of p(z | x) with prior proposals."""
    if spec.feature_noise_sd == 0:
        axes_seen = {}
        for j in range(spec.n_features):
            axes_seen.setdefault(int(params.feature_axis[j]), j)
        if len(axes_seen) < spec.latent_dim:
            raise CohortError("noise-free inversion needs every latent axis observed")
        z = np.zeros(spec.latent_dim)
        for axis, j in axes_seen.items():
            z[axis] = _invert_feature_scalar(params, j, float(x[j]))
        return z[None, :], np.ones(1)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_draws, spec.latent_dim))
    resid = _feature_map(params, z) - np.asarray(x, dtype=float)
    log_w = -0.5 * np.sum(resid**2, axis=1) / spec.feature_noise_sd**2
    log_w -= log_w.max()
    w = np.exp(log_w)
    return z, w / w.sum()


def oracle_marginal_risk_given_features(spec, x, n_draws=100_000, seed=0) -> float:
    """Monte-Carlo estimate of P(outcome | features) under the true process."""
    params = generator_params(spec)
    z, w = _latent_importance_sample(spec, params, x, n_draws, seed)
    post = softmax_rows(z @ params.score_matrix.T + params.score_offsets)
    risks = sigmoid(z @ params.risk_weights[:, None] + params.beta[None, :])
    return float(w @ np.sum(post * risks, axis=1))


def oracle_conditional_risk_given_features(spec, x, diagnosis, n_draws=100_000, seed=0):
    """Monte-Carlo estimate of P(outcome | features, diagnosis)."""
    if not 0 <= int(diagnosis) < spec.n_diagnoses:
        raise CohortError(f"unknown diagnosis {diagnosis}")
    params = generator_params(spec)
    z, w = _latent_importance_sample(spec, params, x, n_draws, seed)
    post = softmax_rows(z @ params.score_matrix.T + params.score_offsets)[:, int(diagnosis)]
    risks = sigmoid(z @ params.risk_weights + params.beta[int(diagnosis)])
    denom = w @ post
    if denom <= 0:
        raise CohortError("diagnosis has no posterior support at these features")
    return float((w * post) @ risks / denom)


def oracle_diagnosis_posterior_given_features(spec, x, n_draws=100_000, seed=0):
    params = generator_params(spec)
    z, w = _latent_importance_sample(spec, params, x, n_draws, seed)
    post = softmax_rows(z @ params.score_matrix.T + params.score_offsets)
    return w @ post


# ---------------------------------------------------------------------------
# Splitting and census
# ---------------------------------------------------------------------------


def split(cohort: Cohort, fractions, seed: int):
    """Outcome-stratified partition into (train, valid, test) by `fractions`."""
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3:
        raise CohortError("fractions must be a (train, valid, test) triple")
    if any(f < 0 for f in fractions):
        raise CohortError("fractions must be non-negative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise CohortError("fractions must sum to 1")

    rng = np.random.default_rng(seed)
    assigned = [[] for _ in range(3)]
    for y in (0, 1):
        stratum = np.flatnonzero(cohort.outcome == y)
        if stratum.size == 0:
            continue
        stratum = stratum[rng.permutation(stratum.size)]
        targets = np.array(fractions) * stratum.size
        counts = np.floor(targets).astype(int)
        frac_part = targets - counts
        for j in np.argsort(-frac_part)[: stratum.size - counts.sum()]:
            counts[j] += 1
        start = 0
        for j in range(3):
            assigned[j].append(stratum[start:start + counts[j]])
            start += counts[j]

    parts = []
    for j in range(3):
        idx = np.sort(np.concatenate(assigned[j])) if assigned[j] else np.array([], dtype=int)
        if fractions[j] > 0 and idx.size == 0:
            raise CohortError(f"split {j} with fraction {fractions[j]} would receive 0 records")
        parts.append(cohort.subset(idx))
    return tuple(parts)


@dataclass
class CensusRow:
    diagnosis: int
    name: str
    count: int
    mortality: float


def diagnosis_census(cohort: Cohort, min_patients=0, min_mortality=0.0):
    """Vocabulary diagnoses meeting both thresholds (inclusive), largest first."""
    k = len(cohort.diagnosis_vocab)
    labeled = cohort.diagnosis >= 0
    counts = np.bincount(cohort.diagnosis[labeled], minlength=k)
    deaths = np.bincount(
        cohort.diagnosis[labeled], weights=cohort.outcome[labeled], minlength=k
    )
    rows = []
    for d in range(k):
        mort = float(deaths[d] / counts[d]) if counts[d] else 0.0
        if counts[d] >= min_patients and mort >= min_mortality:
            rows.append(CensusRow(d, cohort.diagnosis_vocab[d], int(counts[d]), mort))
    rows.sort(key=lambda r: (-r.count, r.diagnosis))
    return rows


# ---------------------------------------------------------------------------
# File format: one header line of JSON schema, then one record per line
# ---------------------------------------------------------------------------


def atomic_write_text(path, text):
    """Write-then-rename so partial outputs are never left in place."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt_floats(values):
    return ",".join(repr(float(v)) for v in values)


def save_cohort(cohort: Cohort, path):
    lines = [FORMAT_MAGIC]
    header = {
        "feature_names": cohort.schema.names,
        "feature_ranges": [[lo, hi] for lo, hi in cohort.schema.ranges],
        "diagnosis_vocab": cohort.diagnosis_vocab,
        "has_latent": cohort.has_latent,
        "n_records": len(cohort),
    }
    lines.append(json.dumps(header, sort_keys=True))
    for i in range(len(cohort)):
        d = int(cohort.diagnosis[i])
        fields = [
            str(int(cohort.ids[i])),
            _fmt_floats(cohort.features[i]),
            cohort.diagnosis_vocab[d] if d >= 0 else "",
            str(int(cohort.outcome[i])),
            _fmt_floats(cohort.latent[i]) if cohort.has_latent else "",
        ]
        lines.append("\t".join(fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_cohort(path) -> Cohort:
    with open(path, encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0] != FORMAT_MAGIC:
        raise CohortError(f"{path}: not a cohort file (missing {FORMAT_MAGIC} header)")
    try:
        header = json.loads(raw[1])
    except (IndexError, json.JSONDecodeError) as exc:
        raise CohortError(f"{path}: malformed header line: {exc}") from exc
    schema = FeatureSchema(
        list(header["feature_names"]),
        [tuple(r) for r in header["feature_ranges"]],
    )
    vocab = list(header["diagnosis_vocab"])
    vocab_index = {name: i for i, name in enumerate(vocab)}
    has_latent = bool(header["has_latent"])

    ids, feats, diags, outs, latents = [], [], [], [], []
    for lineno, line in enumerate(raw[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise CohortError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            ids.append(int(parts[0]))
            values = [float(v) for v in parts[1].split(",")]
            outs.append(int(parts[3]))
        except ValueError as exc:
            raise CohortError(f"{path}:{lineno}: {exc}") from exc
        if len(values) != schema.n_features:
            raise CohortError(
                f"{path}:{lineno}: {len(values)} feature values, "
                f"schema declares {schema.n_features}"
            )
        feats.append(values)
        if parts[2]:
            if parts[2] not in vocab_index:
                raise CohortError(
                    f"{path}:{lineno}: diagnosis {parts[2]!r} not in vocabulary"
                )
            diags.append(vocab_index[parts[2]])
        else:
            diags.append(-1)
        if has_latent:
            if not parts[4]:
                raise CohortError(f"{path}:{lineno}: missing latent state")
            latents.append([float(v) for v in parts[4].split(",")])
    n = len(ids)
    if n != int(header["n_records"]):
        raise CohortError(
            f"{path}: header announces {header['n_records']} records, found {n}"
        )
    features = np.array(feats, dtype=float).reshape(n, schema.n_features)
    latent = np.array(latents, dtype=float) if has_latent and n else None
    if has_latent and n == 0:
        latent = None
    return Cohort(schema, ids, features, diags, outs, latent, vocab)
