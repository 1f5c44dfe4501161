import filecmp
import json
import os

import numpy as np
import pytest

from duacm.cli import main
from duacm.cohort import load_cohort

BASE_CONFIG = {
    "n_patients": 3000, "n_features": 2, "latent_dim": 1, "n_diagnoses": 4,
    "zipf_exponent": 1.0, "confusable_pairs": [[0, 1, 0.0]],
    "beta_true": {"0": -2.0, "1": 2.0}, "risk_weights": [0.9],
    "feature_noise_sd": 0.02, "seed": 17,
    "cohort": "cohort.tsv", "bundle": "bundle.json",
    "fractions": [0.7, 0.15, 0.15], "split_seed": 17,
    "vocab_min_patients": 30,
    "gam": {"inner_bags": 4, "outer_bags": 2, "learning_rate": 0.25,
            "max_rounds": 150, "patience": 20, "max_bins": 16},
    "mlp": {"learning_rates": [0.05], "weight_decays": [1e-4],
            "epochs": 8, "batch_size": 256},
    "split": "test", "mode": "exact", "top_k": 3,
    "d_common": {"min_patients": 100, "min_mortality": 0.0},
    "harness": {"gam": {"inner_bags": 2, "outer_bags": 1, "learning_rate": 0.25,
                        "max_rounds": 80, "patience": 15, "max_bins": 16},
                "min_subset": 60},
}


def read_table(path):
    lines = path.read_text().splitlines()
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"))) for line in lines[1:]]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Run the full pipeline once; individual tests inspect the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    os.chdir(root)
    config_path = root / "config.json"
    config_path.write_text(json.dumps(BASE_CONFIG))
    assert main(["generate", "--config", str(config_path)]) == 0
    assert main(["train", "--config", str(config_path)]) == 0
    assert main(["predict", "--config", str(config_path),
                 "--out", "predictions.tsv"]) == 0
    assert main(["evaluate", "--config", str(config_path), "--out", "evaldir"]) == 0
    assert main(["experiment", "--config", str(config_path), "--kind", "du-summary",
                 "--out", "dudir"]) == 0
    return root, config_path


class TestPipeline:
    def test_generate_output_loads(self, workdir):
        root, _ = workdir
        cohort = load_cohort(root / "cohort.tsv")
        assert len(cohort) == 3000
        assert cohort.has_latent

    def test_predict_rows_cover_test_split(self, workdir):
        root, _ = workdir
        rows = read_table(root / "predictions.tsv")
        assert len(rows) == 450  # 15% of 3000
        for row in rows:
            mean, q90 = float(row["mean"]), float(row["q90"])
            assert 0.0 <= mean <= 1.0
            assert 0.0 <= q90 <= 1.0
            assert row["top_diagnosis"].startswith("d")

    def test_evaluate_metrics_present(self, workdir):
        root, _ = workdir
        metrics = {r["metric"]: float(r["value"])
                   for r in read_table(root / "evaldir" / "metrics.tsv")}
        assert 0.5 < metrics["outcome_auc_with_diagnosis"] <= 1.0
        assert metrics["outcome_auc_with_diagnosis"] > metrics["outcome_auc_marginal"]
        census = read_table(root / "evaldir" / "diagnosis_counts.tsv")
        assert sum(int(r["count"]) for r in census) == 3000

    def test_du_summary_separates_confusable_subpopulation(self, workdir):
        root, _ = workdir
        cohort = load_cohort(root / "cohort.tsv")
        diag_by_id = {int(cohort.ids[i]): int(cohort.diagnosis[i])
                      for i in range(len(cohort))}
        rows = read_table(root / "dudir" / "du_patients.tsv")
        pair_deltas, other_deltas = [], []
        for row in rows:
            delta = float(row["delta"])
            if diag_by_id[int(row["patient_id"])] in (0, 1):
                pair_deltas.append(delta)
            else:
                other_deltas.append(delta)
        assert np.quantile(pair_deltas, 0.75) > 0.2
        assert np.median(other_deltas) < np.quantile(pair_deltas, 0.75)
        hist = read_table(root / "dudir" / "delta_histogram.tsv")
        mass_above = sum(int(r["count"]) for r in hist if float(r["bin_lo"]) >= 0.2)
        assert mass_above > 0

    def test_experiment_acm_vs_specific(self, workdir):
        root, config_path = workdir
        assert main(["experiment", "--config", str(config_path),
                     "--kind", "acm-vs-specific", "--out", "acmdir"]) == 0
        summary = {r["quantity"]: float(r["value"])
                   for r in read_table(root / "acmdir" / "auc_summary.tsv")}
        assert 0.5 < summary["acm_global_auc"] <= 1.0

    def test_cli_byte_identical_reruns(self, workdir, tmp_path_factory):
        root, config_path = workdir
        other = tmp_path_factory.mktemp("rerun")
        os.chdir(other)
        try:
            assert main(["generate", "--config", str(config_path)]) == 0
            assert main(["train", "--config", str(config_path)]) == 0
            assert main(["predict", "--config", str(config_path),
                         "--out", "predictions.tsv"]) == 0
            assert main(["experiment", "--config", str(config_path),
                         "--kind", "du-summary", "--out", "dudir"]) == 0
            for rel in ("cohort.tsv", "bundle.json", "predictions.tsv",
                        os.path.join("dudir", "du_patients.tsv"),
                        os.path.join("dudir", "delta_histogram.tsv")):
                assert filecmp.cmp(root / rel, other / rel, shallow=False), rel
        finally:
            os.chdir(root)


class TestErrors:
    def test_missing_config(self, capsys, tmp_path):
        assert main(["generate", "--config", str(tmp_path / "nope.json")]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "error" in err

    def test_unknown_experiment_kind(self, capsys, workdir):
        _, config_path = workdir
        assert main(["experiment", "--config", str(config_path),
                     "--kind", "nonsense"]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "nonsense" in err["error"]

    def test_failed_run_leaves_no_partial_output(self, tmp_path):
        os.chdir(tmp_path)
        config = dict(BASE_CONFIG, n_patients=-4)
        (tmp_path / "c.json").write_text(json.dumps(config))
        assert main(["generate", "--config", str(tmp_path / "c.json")]) == 1
        assert not (tmp_path / "cohort.tsv").exists()
