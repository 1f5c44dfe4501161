import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from duacm.cohort import split
from duacm.diagmodel import DiagnosisModel, fit_mlp, init_params, predict_diagnosis
from duacm.gam import BinningSpec, GamConfig, GamModel, ShapeFunction, fit_gam, predict_gam
from duacm.inference import (
    DuConfig,
    InferenceError,
    confirm,
    du_predict,
    explain,
    open_session,
    pessimistic_delta,
    reset,
    rule_out,
    weighted_lower_quantile,
)
from duacm.numerics import logit, sigmoid


def const_models(posterior, risks, n_features=1):
    """Models with x-independent outputs: softmax(b) = posterior, risk via offsets."""
    posterior = np.asarray(posterior, dtype=float)
    risks = np.asarray(risks, dtype=float)
    k = posterior.size
    vocab = [f"d{i:03d}" for i in range(k)]
    weights, biases = init_params(n_features, k, np.random.default_rng(0))
    for w in weights:
        w[:] = 0.0
    biases[-1][:] = np.where(posterior > 0, np.log(np.maximum(posterior, 1e-300)), -1e6)
    diag = DiagnosisModel(weights, biases, (np.zeros(n_features), np.ones(n_features)),
                          vocab)
    binning = BinningSpec([np.array([])] * n_features, 2)
    shapes = [ShapeFunction(j, np.zeros(1), np.ones(1)) for j in range(n_features)]
    gam = GamModel(0.0, shapes, binning,
                   diagnosis_offsets={d: float(logit(risks[d])) for d in range(k)},
                   diagnosis_weights=np.ones(k), diagnosis_vocab=vocab)
    return gam, diag


@pytest.fixture(scope="module")
def trained_pair(confusable_cohort):
    train, valid, test = split(confusable_cohort, (0.7, 0.15, 0.15), seed=0)
    gam = fit_gam(train, valid, GamConfig(use_diagnosis=True, inner_bags=4,
                                          outer_bags=2, learning_rate=0.2,
                                          max_rounds=200, patience=30,
                                          max_bins=16, seed=1))
    mlp = fit_mlp(train, valid, grid={"learning_rates": [0.05], "weight_decays": [1e-4]},
                  epochs=15, batch_size=256, seed=2)
    return gam, mlp, test


class TestWeightedLowerQuantile:
    def test_two_point_spec_example(self):
        assert weighted_lower_quantile([0.1, 0.9], [0.5, 0.5], 0.9) == 0.9
        assert weighted_lower_quantile([0.1, 0.9], [0.5, 0.5], 0.5) == 0.1

    def test_boundary_cumulative_weight(self):
        # cumulative weight exactly q picks the lower entry (lower-quantile rule)
        assert weighted_lower_quantile([0.2, 0.8], [0.9, 0.1], 0.9) == 0.2
        assert weighted_lower_quantile([0.2, 0.8], [8 / 9, 1 / 9], 0.9) == 0.8

    @given(
        hst.lists(hst.floats(min_value=0.01, max_value=0.99), min_size=1, max_size=12),
        hst.lists(hst.floats(min_value=0.05, max_value=1.0), min_size=1, max_size=12),
    )
    @settings(max_examples=200, deadline=None)
    def test_quantiles_monotone_and_bounded(self, risks, raw_weights):
        size = min(len(risks), len(raw_weights))
        risks = np.array(risks[:size])
        weights = np.array(raw_weights[:size])
        weights = weights / weights.sum()
        qs = [weighted_lower_quantile(risks, weights, q) for q in (0.1, 0.5, 0.9)]
        assert risks.min() <= qs[0] <= qs[1] <= qs[2] <= risks.max()


class TestDuPredict:
    def test_point_mass_posterior(self):
        gam, diag = const_models([0.0, 1.0, 0.0], [0.2, 0.7, 0.9])
        x = np.zeros(1)
        dist = du_predict(gam, diag, x, DuConfig(mode="sampled", n_samples=150, seed=0))
        expected = predict_gam(gam, x, diagnosis=1)
        assert dist.mean == pytest.approx(expected, abs=1e-12)
        assert dist.quantiles[0.9] == pytest.approx(expected, abs=1e-12)
        assert pessimistic_delta(dist) == pytest.approx(0.0, abs=1e-12)

    def test_exact_two_point(self):
        gam, diag = const_models([0.5, 0.5], [0.1, 0.9])
        dist = du_predict(gam, diag, np.zeros(1), DuConfig(mode="exact"))
        assert dist.mean == pytest.approx(0.5, abs=1e-9)
        assert dist.quantiles[0.9] == pytest.approx(0.9, abs=1e-9)
        assert pessimistic_delta(dist) == pytest.approx(0.4, abs=1e-9)

    def test_exact_mean_is_factorization(self, trained_pair):
        gam, mlp, test = trained_pair
        for i in range(0, 100, 9):
            x = test.features[i]
            dist = du_predict(gam, mlp, x, DuConfig(mode="exact"))
            post = predict_diagnosis(mlp, x).probabilities
            manual = sum(predict_gam(gam, x, d) * post[d] for d in range(len(post)))
            assert dist.mean == pytest.approx(manual, abs=1e-12)

    def test_sampled_close_to_exact(self, trained_pair):
        gam, mlp, test = trained_pair
        failures = 0
        n_checked = 120
        for i in range(n_checked):
            x = test.features[i]
            exact = du_predict(gam, mlp, x, DuConfig(mode="exact"))
            sampled = du_predict(gam, mlp, x, DuConfig(mode="sampled", n_samples=150,
                                                       seed=1000 + i))
            sd = np.sqrt(max(exact.weights @ (exact.risks - exact.mean) ** 2, 0.0))
            bound = 4 * sd / np.sqrt(150)
            if abs(sampled.mean - exact.mean) > bound + 1e-15:
                failures += 1
        assert failures <= max(1, int(0.01 * n_checked))

    def test_sampled_convergence_rate(self, trained_pair):
        gam, mlp, test = trained_pair
        x = test.features[3]
        exact = du_predict(gam, mlp, x, DuConfig(mode="exact"))
        sd = np.sqrt(exact.weights @ (exact.risks - exact.mean) ** 2)
        ns = [10, 100, 1000, 10000]
        mean_abs_err = []
        for n in ns:
            errs = [
                abs(du_predict(gam, mlp, x, DuConfig(mode="sampled", n_samples=n,
                                                     seed=s)).mean - exact.mean)
                for s in range(30)
            ]
            mean_abs_err.append(np.mean(errs))
        inv_sqrt = 1.0 / np.sqrt(ns)
        slope = np.polyfit(inv_sqrt, mean_abs_err, 1)[0]
        assert slope > 0
        assert mean_abs_err[-1] < 10 * sd / np.sqrt(10000)

    def test_weights_sum_to_one(self, trained_pair):
        gam, mlp, test = trained_pair
        for mode in ("exact", "sampled"):
            dist = du_predict(gam, mlp, test.features[0], DuConfig(mode=mode, seed=4))
            assert dist.weights.sum() == pytest.approx(1.0, abs=1e-9)
            assert dist.mean == pytest.approx(float(dist.weights @ dist.risks), abs=1e-12)

    def test_vocabulary_mismatch_errors(self):
        gam, _ = const_models([0.5, 0.5], [0.1, 0.9])
        _, diag3 = const_models([0.3, 0.3, 0.4], [0.1, 0.5, 0.9])
        with pytest.raises(InferenceError, match="vocabulary"):
            du_predict(gam, diag3, np.zeros(1))

    def test_missing_offsets_warn(self):
        gam, diag = const_models([0.5, 0.5], [0.1, 0.9])
        gam.diagnosis_offsets = {0: gam.diagnosis_offsets[0]}
        gam.diagnosis_vocab = None  # marginal-style outcome model
        dist = du_predict(gam, diag, np.zeros(1), DuConfig(mode="exact"))
        assert any("d001" in w for w in dist.warnings)

    def test_missing_q90_delta_errors(self):
        gam, diag = const_models([1.0], [0.4])
        dist = du_predict(gam, diag, np.zeros(1),
                          DuConfig(mode="exact", quantiles=(0.5,)))
        with pytest.raises(InferenceError, match="0.9"):
            pessimistic_delta(dist)


class TestExplain:
    def test_point_mass_single_entry(self):
        gam, diag = const_models([0.0, 1.0], [0.2, 0.8])
        dist = du_predict(gam, diag, np.zeros(1), DuConfig(mode="sampled", seed=0))
        exp = explain(dist, top_k=3)
        assert len(exp.entries) == 1
        assert exp.drivers == [1]

    def test_risky_rare_diagnosis_flagged(self):
        gam, diag = const_models([8 / 9, 1 / 9], [0.1, 0.9])
        dist = du_predict(gam, diag, np.zeros(1), DuConfig(mode="exact"))
        exp = explain(dist, top_k=2, driver_threshold=0.05)
        assert exp.entries[0][0] == 0  # ranked by probability
        assert exp.drivers == [1]     # but the rare risky one drives Q90

    def test_top_k_clamped_to_vocabulary(self):
        gam, diag = const_models([0.25] * 4, [0.1, 0.2, 0.3, 0.4])
        dist = du_predict(gam, diag, np.zeros(1), DuConfig(mode="exact"))
        exp = explain(dist, top_k=100)
        assert len(exp.entries) == 4

    def test_driver_threshold_excludes_negligible(self):
        gam, diag = const_models([0.97, 0.03], [0.1, 0.9])
        dist = du_predict(gam, diag, np.zeros(1), DuConfig(mode="exact"))
        exp = explain(dist, top_k=2, driver_threshold=0.05)
        assert 1 not in exp.drivers


class TestSessions:
    def test_open_matches_fresh_predict(self, trained_pair):
        gam, mlp, test = trained_pair
        x = test.features[5]
        session = open_session(gam, mlp, x)
        fresh = du_predict(gam, mlp, x, DuConfig(mode="exact"))
        assert session.current.mean == fresh.mean
        assert session.current.quantiles == fresh.quantiles

    def test_two_sessions_identical(self, trained_pair):
        gam, mlp, test = trained_pair
        x = test.features[6]
        a = open_session(gam, mlp, x, session_id="a")
        b = open_session(gam, mlp, x, session_id="b")
        assert np.array_equal(a.current.weights, b.current.weights)
        assert a.current.quantiles == b.current.quantiles

    def test_open_session_fast_for_94_diagnoses(self):
        k = 94
        rng = np.random.default_rng(0)
        post = rng.dirichlet(np.ones(k))
        risks = rng.uniform(0.05, 0.95, k)
        gam, diag = const_models(post, risks, n_features=10)
        x = np.zeros(10)
        open_session(gam, diag, x)  # warm-up
        t0 = time.perf_counter()
        open_session(gam, diag, x)
        assert time.perf_counter() - t0 < 0.1

    def test_confirm_collapses(self, trained_pair):
        gam, mlp, test = trained_pair
        x = test.features[7]
        session = open_session(gam, mlp, x)
        dist = confirm(session, 1)
        expected = predict_gam(gam, x, diagnosis=1)
        assert dist.mean == pytest.approx(expected, abs=1e-12)
        assert dist.quantiles[0.9] == pytest.approx(expected, abs=1e-12)

    def test_rule_out_renormalizes(self):
        gam, diag = const_models([0.6, 0.3, 0.1], [0.2, 0.5, 0.8])
        session = open_session(gam, diag, np.zeros(1))
        dist = rule_out(session, {0})
        remaining = {int(d): w for d, w, _ in dist.entries if w > 0}
        assert remaining[1] == pytest.approx(0.75, abs=1e-9)
        assert remaining[2] == pytest.approx(0.25, abs=1e-9)

    def test_rule_out_risky_lowers_q90_confirm_raises_mean(self, trained_pair):
        gam, mlp, test = trained_pair
        risky_risk = None
        x = test.features[8]
        session = open_session(gam, mlp, x)
        q90_before = session.current.quantiles[0.9]
        risky_risk = float(session.conditional_risks[1])
        assert q90_before == pytest.approx(risky_risk, abs=1e-12)

        rule_out(session, {1})
        assert session.current.quantiles[0.9] < q90_before

        reset(session)
        confirm(session, 1)
        assert session.current.mean == pytest.approx(risky_risk, abs=1e-12)

    def test_rule_out_idempotent_order_independent(self):
        gam, diag = const_models([0.4, 0.3, 0.2, 0.1], [0.1, 0.4, 0.6, 0.9])
        a = open_session(gam, diag, np.zeros(1), session_id="a")
        rule_out(a, {0})
        rule_out(a, {0})
        rule_out(a, {2})
        b = open_session(gam, diag, np.zeros(1), session_id="b")
        rule_out(b, {2, 0})
        assert np.allclose(a.current.weights, b.current.weights, atol=1e-15)
        assert a.excluded == b.excluded

    def test_exclude_everything_rejected_session_unchanged(self):
        gam, diag = const_models([0.7, 0.3], [0.2, 0.9])
        session = open_session(gam, diag, np.zeros(1))
        before = session.current.weights.copy()
        with pytest.raises(InferenceError, match="every diagnosis"):
            rule_out(session, {0, 1})
        assert np.array_equal(session.current.weights, before)
        assert session.excluded == set()

    def test_confirm_excluded_rejected(self):
        gam, diag = const_models([0.7, 0.3], [0.2, 0.9])
        session = open_session(gam, diag, np.zeros(1))
        rule_out(session, {1})
        with pytest.raises(InferenceError, match="ruled out"):
            confirm(session, 1)

    def test_rule_out_confirmed_rejected(self):
        gam, diag = const_models([0.7, 0.3], [0.2, 0.9])
        session = open_session(gam, diag, np.zeros(1))
        confirm(session, 0)
        with pytest.raises(InferenceError, match="confirmed"):
            rule_out(session, {0})

    def test_reset_restores_base(self, trained_pair):
        gam, mlp, test = trained_pair
        x = test.features[9]
        session = open_session(gam, mlp, x)
        base = session.current.weights.copy()
        rule_out(session, {0})
        reset(session)
        assert np.array_equal(session.current.weights, base)

    @given(hst.integers(min_value=0, max_value=10**6))
    @settings(max_examples=100, deadline=None)
    def test_excluding_max_risk_never_raises_q90(self, seed):
        rng = np.random.default_rng(seed)
        k = rng.integers(2, 8)
        post = rng.dirichlet(np.ones(k))
        risks = rng.uniform(0.01, 0.99, k)
        gam, diag = const_models(post, risks)
        session = open_session(gam, diag, np.zeros(1))
        q_before = session.current.quantiles[0.9]
        top = int(np.argmax(session.conditional_risks))
        try:
            dist = rule_out(session, {top})
        except InferenceError:
            return  # excluding the only remaining diagnosis
        assert dist.quantiles[0.9] <= q_before + 1e-12
