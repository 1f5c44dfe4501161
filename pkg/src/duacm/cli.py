"""Command-line pipeline: generate cohorts, train the two-model bundle, evaluate,
run the experiment harnesses, batch-predict, and serve the interactive API.

Every command reads a JSON config file (``--config``); ``--seed`` and ``--out``
override the config's ``seed`` / ``out`` keys. One config file can drive the
whole pipeline since each command reads only the keys it needs. With a fixed
config and seed every command's outputs are byte-identical across runs; files
are written via write-then-rename so partial outputs are never left behind.

Config keys (defaults in parentheses):

  generate   n_patients, n_features, latent_dim, n_diagnoses, zipf_exponent
             (1.2), confusable_pairs ([]), beta_true ({}), risk_weights
             (zeros), feature_noise_sd (0.1), seed (0); writes `cohort`
             (cohort.tsv)
  train      cohort, fractions ([0.7, 0.15, 0.15]), vocab_min_patients (50),
             vocab_min_mortality (0.0), gam ({}: GamConfig overrides), mlp
             ({learning_rates, weight_decays, epochs (200), batch_size (128)}),
             split_seed (seed), seed; writes `bundle` (bundle.json)
  evaluate   cohort, bundle, fractions, split ("test"), split_seed; writes
             into `evaluate_dir` (evaluation/)
  experiment kind (acm-vs-specific | out-of-diagnosis | cross-correlation |
             du-summary), cohort, d_common ({min_patients (200),
             min_mortality (0.05)}), harness ({gam, valid_fraction (0.15),
             min_subset (30)}), bundle + fractions + split (du-summary only),
             alpha (0.05), seed; writes into `experiment_dir`
             (experiment-<kind>/)
  predict    cohort, bundle, fractions, split ("test"), mode ("sampled"),
             n_samples (150), quantiles ([0.5, 0.9]), top_k (3),
             driver_threshold (0.05), split_seed, seed; writes `predict_out`
             (predictions.tsv)
  serve      cohort, bundle, host (127.0.0.1), port (8000),
             session_timeout_minutes (30), static_dir (none)

One config file can drive the whole pipeline: each command reads and writes its
own keys (`--out` overrides the writing command's output path).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .cohort import (
    Cohort,
    CohortSpec,
    atomic_write_text,
    diagnosis_census,
    generate_cohort,
    load_cohort,
    save_cohort,
    split,
)
from .diagmodel import DEFAULT_GRID, fit_mlp, one_vs_all_auc, predict_diagnosis_batch
from .experiments import (
    HarnessConfig,
    du_summary,
    run_acm_vs_specific,
    run_cross_model_correlation,
    run_out_of_diagnosis,
)
from .gam import GamConfig, fit_gam, predict_gam_batch
from .inference import DuConfig, du_predict, explain, pessimistic_delta
from .metrics import auc, calibration_report
from .modelio import ModelBundle, load_bundle, restrict_vocabulary, save_bundle


class CliError(ValueError):
    pass


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def write_table(path, header, rows):
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(_fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _config_hash(config):
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")
    ).hexdigest()


def _file_fingerprint(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_split(config, cohort):
    fractions = config.get("fractions", [0.7, 0.15, 0.15])
    split_seed = int(config.get("split_seed", config.get("seed", 0)))
    return split(cohort, fractions, split_seed)


def _pick_split(config, cohort):
    which = config.get("split", "test")
    if which == "all":
        return cohort
    train, valid, test = _load_split(config, cohort)
    try:
        return {"train": train, "valid": valid, "test": test}[which]
    except KeyError:
        raise CliError(f"unknown split {which!r}") from None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(config):
    spec = CohortSpec(
        n_patients=int(config["n_patients"]),
        n_features=int(config["n_features"]),
        latent_dim=int(config["latent_dim"]),
        n_diagnoses=int(config["n_diagnoses"]),
        zipf_exponent=float(config.get("zipf_exponent", 1.2)),
        confusable_pairs=[tuple(p) for p in config.get("confusable_pairs", [])],
        beta_true={int(k): float(v) for k, v in config.get("beta_true", {}).items()},
        risk_weights=config.get("risk_weights") or (),
        feature_noise_sd=float(config.get("feature_noise_sd", 0.1)),
        seed=int(config.get("seed", 0)),
    )
    out = config.get("cohort", "cohort.tsv")
    cohort = generate_cohort(spec)
    save_cohort(cohort, out)
    return {"out": out, "n_records": len(cohort), "mortality": cohort.mortality}


def cmd_train(config):
    cohort_path = config["cohort"]
    cohort = load_cohort(cohort_path)
    seed = int(config.get("seed", 0))
    train, valid, _ = _load_split(config, cohort)

    census = diagnosis_census(
        train,
        int(config.get("vocab_min_patients", 50)),
        float(config.get("vocab_min_mortality", 0.0)),
    )
    keep = sorted(r.diagnosis for r in census)
    if not keep:
        raise CliError("no diagnosis passes the vocabulary thresholds")
    f_train = restrict_vocabulary(train, keep)
    f_valid = restrict_vocabulary(valid, keep)
    if len(f_valid) == 0:
        raise CliError("validation split has no records in the model vocabulary")

    gam_overrides = dict(config.get("gam", {}))
    gam_cfg = replace(GamConfig(use_diagnosis=True, seed=seed),
                      **{k: v for k, v in gam_overrides.items()})
    gam_cfg.use_diagnosis = True
    mlp_cfg = dict(config.get("mlp", {}))
    grid = {
        "learning_rates": mlp_cfg.get("learning_rates",
                                      DEFAULT_GRID["learning_rates"]),
        "weight_decays": mlp_cfg.get("weight_decays",
                                     DEFAULT_GRID["weight_decays"]),
    }

    outcome_model = fit_gam(f_train, f_valid, gam_cfg)
    diagnosis_model = fit_mlp(
        f_train, f_valid, grid,
        epochs=int(mlp_cfg.get("epochs", 200)),
        batch_size=int(mlp_cfg.get("batch_size", 128)),
        seed=seed + 1,
    )
    bundle = ModelBundle(
        outcome_model=outcome_model,
        diagnosis_model=diagnosis_model,
        schema=cohort.schema,
        vocabulary=f_train.diagnosis_vocab,
        provenance={
            "config_hash": _config_hash(config),
            "data_fingerprint": _file_fingerprint(cohort_path),
            "package_version": __version__,
            "source_diagnosis_ids": keep,
        },
    )
    out = config.get("bundle", "bundle.json")
    save_bundle(bundle, out)
    return {"out": out, "vocabulary_size": len(keep),
            "gam_rounds": outcome_model.metadata["rounds_used"],
            "mlp_validation_loss": diagnosis_model.metadata["validation_loss"]}


def _remap_for_bundle(cohort: Cohort, bundle: ModelBundle):
    """Cohort diagnoses remapped onto the bundle vocabulary (-1 when outside)."""
    index = {name: i for i, name in enumerate(bundle.vocabulary)}
    remapped = np.full(len(cohort), -1, dtype=int)
    for i in range(len(cohort)):
        d = int(cohort.diagnosis[i])
        if d >= 0:
            remapped[i] = index.get(cohort.diagnosis_vocab[d], -1)
    return remapped


def cmd_evaluate(config):
    cohort = load_cohort(config["cohort"])
    bundle = load_bundle(config["bundle"])
    part = _pick_split(config, cohort)
    out_dir = config.get("evaluate_dir", "evaluation")
    os.makedirs(out_dir, exist_ok=True)

    remapped = _remap_for_bundle(part, bundle)
    marginal = predict_gam_batch(bundle.outcome_model, part.features)
    with_d = predict_gam_batch(bundle.outcome_model, part.features, remapped)
    rows = []
    res_marginal = auc(marginal, part.outcome)
    res_with_d = auc(with_d, part.outcome)
    rows.append(("outcome_auc_marginal", res_marginal.auc, res_marginal.standard_error))
    rows.append(("outcome_auc_with_diagnosis", res_with_d.auc, res_with_d.standard_error))
    cal = calibration_report(marginal, part.outcome)
    rows.append(("calibration_intercept", cal.intercept, cal.intercept_se))
    rows.append(("base_rate", float(part.outcome.mean()), 0.0))

    labeled = part.subset(np.flatnonzero(remapped >= 0))
    labeled_diag = remapped[remapped >= 0]
    eval_cohort = Cohort(labeled.schema, labeled.ids, labeled.features, labeled_diag,
                         labeled.outcome, None, list(bundle.vocabulary))
    ova = one_vs_all_auc(bundle.diagnosis_model, eval_cohort)
    rows.append(("diagnosis_macro_one_vs_all_auc", ova.macro_auc, 0.0))
    write_table(os.path.join(out_dir, "metrics.tsv"),
                ["metric", "value", "standard_error"], rows)

    census = diagnosis_census(cohort, 0, 0.0)
    write_table(
        os.path.join(out_dir, "diagnosis_counts.tsv"),
        ["rank", "diagnosis", "name", "count", "mortality"],
        [(i + 1, r.diagnosis, r.name, r.count, r.mortality)
         for i, r in enumerate(census)],
    )
    return {"out_dir": out_dir, "metrics": {r[0]: r[1] for r in rows}}


def _harness_config(config):
    h = dict(config.get("harness", {}))
    gam_cfg = replace(HarnessConfig().gam, **h.get("gam", {}))
    return HarnessConfig(
        gam=gam_cfg,
        valid_fraction=float(h.get("valid_fraction", 0.15)),
        min_subset=int(h.get("min_subset", 30)),
        seed=int(config.get("seed", 0)),
    )


def cmd_experiment(config):
    kind = config.get("kind")
    cohort = load_cohort(config["cohort"])
    out_dir = config.get("experiment_dir", f"experiment-{kind}")
    os.makedirs(out_dir, exist_ok=True)
    dc = config.get("d_common", {})
    min_patients = int(dc.get("min_patients", 200))
    min_mortality = float(dc.get("min_mortality", 0.05))
    harness = _harness_config(config)

    if kind == "acm-vs-specific":
        ids = [r.diagnosis for r in diagnosis_census(cohort, min_patients, min_mortality)]
        report = run_acm_vs_specific(cohort, ids, harness)
        rows = []
        for r in report.rows:
            rows.append((
                r.diagnosis, r.name, r.n_train, r.n_test,
                r.auc_specific.auc if r.auc_specific else None,
                r.auc_specific.standard_error if r.auc_specific else None,
                r.auc_acm.auc if r.auc_acm else None,
                r.auc_acm.standard_error if r.auc_acm else None,
                r.skipped,
            ))
        write_table(
            os.path.join(out_dir, "auc_bars.tsv"),
            ["diagnosis", "name", "n_train", "n_test", "auc_specific",
             "se_specific", "auc_acm", "se_acm", "skipped"],
            rows,
        )
        write_table(
            os.path.join(out_dir, "auc_summary.tsv"),
            ["quantity", "value", "standard_error"],
            [
                ("acm_global_auc", report.acm_global.auc,
                 report.acm_global.standard_error),
                ("mean_specific_auc", report.mean_specific, report.se_mean_specific),
                ("mean_acm_auc_on_subsets", report.mean_acm_on_subsets,
                 report.se_mean_acm_on_subsets),
            ],
        )
        return {"out_dir": out_dir, "acm_global_auc": report.acm_global.auc,
                "mean_specific_auc": report.mean_specific}

    if kind == "out-of-diagnosis":
        ids = [r.diagnosis for r in diagnosis_census(cohort, min_patients, min_mortality)]
        report = run_out_of_diagnosis(cohort, ids, harness,
                                      alpha=float(config.get("alpha", 0.05)))
        write_table(
            os.path.join(out_dir, "transfer_scatter.tsv"),
            ["diagnosis", "name", "n", "auc_out", "se_out", "auc_within",
             "se_within", "cal_intercept", "cal_se", "p_value", "bh_rejected",
             "shift_sign", "skipped"],
            [(r.diagnosis, r.name, r.n,
              r.auc_out.auc if r.auc_out else None,
              r.auc_out.standard_error if r.auc_out else None,
              r.auc_within.auc if r.auc_within else None,
              r.auc_within.standard_error if r.auc_within else None,
              r.cal_intercept, r.cal_se, r.p_value,
              int(r.bh_rejected), r.shift_sign, r.skipped)
             for r in report.rows],
        )
        write_table(
            os.path.join(out_dir, "calibration_curves.tsv"),
            ["diagnosis", "name", "bin", "mean_predicted", "observed_rate", "count"],
            [(r.diagnosis, r.name, b, mp, obs, cnt)
             for r in report.rows if r.cal_bins
             for b, (mp, obs, cnt) in enumerate(r.cal_bins)],
        )
        flagged = [r.diagnosis for r in report.rows if r.bh_rejected]
        return {"out_dir": out_dir, "bh_flagged": flagged}

    if kind == "cross-correlation":
        ids = [r.diagnosis for r in diagnosis_census(cohort, min_patients, min_mortality)]
        heldout = cohort.subset(
            np.flatnonzero(~np.isin(cohort.diagnosis, ids))
        )
        report = run_cross_model_correlation(cohort, ids, heldout, harness)
        rows = []
        for i, di in enumerate(report.diagnoses):
            for j, dj in enumerate(report.diagnoses):
                rows.append((di, dj, report.matrix[i, j]))
        write_table(os.path.join(out_dir, "correlation_matrix.tsv"),
                    ["diagnosis_i", "diagnosis_j", "spearman"], rows)
        write_table(
            os.path.join(out_dir, "correlation_summary.tsv"),
            ["quantity", "value"],
            [("mean_diagonal", report.mean_diagonal),
             ("mean_off_diagonal", report.mean_off_diagonal)],
        )
        return {"out_dir": out_dir, "mean_diagonal": report.mean_diagonal,
                "mean_off_diagonal": report.mean_off_diagonal}

    if kind == "du-summary":
        bundle = load_bundle(config["bundle"])
        part = _pick_split(config, cohort)
        remapped = _remap_for_bundle(part, bundle)
        eval_cohort = Cohort(part.schema, part.ids, part.features, remapped,
                             part.outcome, None, list(bundle.vocabulary))
        report = du_summary(bundle.outcome_model, bundle.diagnosis_model, eval_cohort)
        write_table(
            os.path.join(out_dir, "du_patients.tsv"),
            ["patient_id", "mean", "q50", "q90", "delta", "diagnosis"],
            [(r.patient_id, r.mean, r.q50, r.q90, r.delta,
              bundle.vocabulary[r.true_diagnosis]
              if r.true_diagnosis is not None else None)
             for r in report.rows],
        )
        write_table(
            os.path.join(out_dir, "delta_histogram.tsv"),
            ["bin_lo", "bin_hi", "count"],
            [(report.histogram_edges[i], report.histogram_edges[i + 1],
              int(report.histogram_counts[i]))
             for i in range(len(report.histogram_counts))],
        )
        write_table(
            os.path.join(out_dir, "mean_vs_delta.tsv"),
            ["patient_id", "mean", "delta"],
            [(r.patient_id, r.mean, r.delta) for r in report.rows],
        )
        return {"out_dir": out_dir, "n_patients": len(report.rows)}

    raise CliError(f"unknown experiment kind {kind!r}")


def cmd_predict(config):
    cohort = load_cohort(config["cohort"])
    bundle = load_bundle(config["bundle"])
    part = _pick_split(config, cohort)
    seed = int(config.get("seed", 0))
    du_cfg = DuConfig(
        mode=config.get("mode", "sampled"),
        n_samples=int(config.get("n_samples", 150)),
        quantiles=tuple(config.get("quantiles", [0.5, 0.9])),
        seed=seed,
    ).validated()
    if 0.9 not in du_cfg.quantiles:
        raise CliError("predict requires the 0.9 quantile for the pessimistic delta")
    top_k = int(config.get("top_k", 3))
    threshold = float(config.get("driver_threshold", 0.05))

    rows = []
    for i in range(len(part)):
        cfg = replace(du_cfg, seed=seed + i)
        dist = du_predict(bundle.outcome_model, bundle.diagnosis_model,
                          part.features[i], cfg)
        exp = explain(dist, top_k=top_k, driver_threshold=threshold)
        top_d, top_p, top_r = exp.entries[0]
        rows.append((
            int(part.ids[i]), dist.mean, dist.quantiles[0.5], dist.quantiles[0.9],
            pessimistic_delta(dist),
            bundle.vocabulary[top_d], top_p, top_r,
            ";".join(bundle.vocabulary[d] for d in exp.drivers),
        ))
    out = config.get("predict_out", "predictions.tsv")
    write_table(
        out,
        ["patient_id", "mean", "q50", "q90", "delta", "top_diagnosis",
         "top_probability", "top_conditional_risk", "risk_drivers"],
        rows,
    )
    return {"out": out, "n_patients": len(rows)}


def cmd_serve(config):
    import uvicorn

    from .service import create_app

    cohort = load_cohort(config["cohort"])
    bundle = load_bundle(config["bundle"])
    app = create_app(
        bundle, cohort,
        session_timeout_minutes=float(config.get("session_timeout_minutes", 30)),
        static_dir=config.get("static_dir"),
    )
    uvicorn.run(app, host=config.get("host", "127.0.0.1"),
                port=int(config.get("port", 8000)), log_level="warning")
    return {"stopped": True}


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "predict": cmd_predict,
    "serve": cmd_serve,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="duacm",
        description="Diagnosis-uncertain all-cause risk modeling pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override config out path")
        if name == "experiment":
            p.add_argument("--kind", default=None, help="override experiment kind")
    args = parser.parse_args(argv)

    try:
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.out is not None:
            out_key = {"generate": "cohort", "train": "bundle",
                       "evaluate": "evaluate_dir", "experiment": "experiment_dir",
                       "predict": "predict_out"}.get(args.command)
            if out_key:
                config[out_key] = args.out
        if args.command == "experiment" and args.kind:
            config["kind"] = args.kind
        result = COMMANDS[args.command](config)
    except Exception as exc:  # noqa: BLE001 - single CLI error boundary
        print(json.dumps({"error": str(exc), "command": args.command}),
              file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "result": result}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
