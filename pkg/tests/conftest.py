import numpy as np
import pytest

from duacm.cohort import Cohort, CohortSpec, FeatureSchema, generate_cohort


def build_cohort(features, diagnosis, outcome, vocab=None, latent=None, ids=None):
    """Assemble a Cohort directly from arrays (test construction helper)."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    n, p = features.shape
    diagnosis = np.asarray(diagnosis, dtype=int)
    if vocab is None:
        k = int(diagnosis.max()) + 1 if (diagnosis >= 0).any() else 0
        vocab = [f"d{i:03d}" for i in range(k)]
    names = [f"f{j:02d}" for j in range(p)]
    if n:
        ranges = [(float(features[:, j].min()), float(features[:, j].max())) for j in range(p)]
    else:
        ranges = [(0.0, 0.0)] * p
    return Cohort(
        FeatureSchema(names, ranges),
        np.arange(n) if ids is None else ids,
        features,
        diagnosis,
        np.asarray(outcome, dtype=int),
        latent,
        vocab,
    )


@pytest.fixture(scope="session")
def confusable_spec():
    """Two observationally identical diagnoses; the rare one is risky."""
    return CohortSpec(
        n_patients=4000,
        n_features=4,
        latent_dim=2,
        n_diagnoses=2,
        zipf_exponent=3.0,
        confusable_pairs=[(0, 1, 0.0)],
        beta_true={0: -2.0, 1: 2.0},
        risk_weights=[1.0, 0.8],
        feature_noise_sd=0.2,
        seed=77,
    )


@pytest.fixture(scope="session")
def confusable_cohort(confusable_spec):
    return generate_cohort(confusable_spec)


@pytest.fixture(scope="session")
def nonlinear_spec():
    """Informative nonlinear features, several diagnoses with spread offsets."""
    return CohortSpec(
        n_patients=10000,
        n_features=6,
        latent_dim=3,
        n_diagnoses=8,
        zipf_exponent=1.1,
        beta_true={0: -0.5, 1: 0.4, 2: -0.2, 3: 0.8, 4: 0.0, 5: -0.8, 6: 0.3, 7: 0.1},
        risk_weights=[1.5, 1.1, 0.8],
        feature_noise_sd=0.04,
        seed=101,
    )


@pytest.fixture(scope="session")
def nonlinear_cohort(nonlinear_spec):
    return generate_cohort(nonlinear_spec)
