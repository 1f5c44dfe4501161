#!/usr/bin/env python3
"""Build a self-contained demo: synthetic cohort, trained bundle, and a config
usable by every CLI command (including `duacm serve`).

The cohort embeds a confusable pair — a common benign diagnosis and a rare
risky one with identical feature signatures — so the console has patients whose
risk is genuinely diagnosis-uncertain.
"""

import argparse
import json
import os
import sys

from duacm.cli import main as cli_main


def build_config(out_dir, quick):
    return {
        "n_patients": 2500 if quick else 5000,
        "n_features": 4,
        "latent_dim": 2,
        "n_diagnoses": 6,
        "zipf_exponent": 1.2,
        "confusable_pairs": [[0, 3, 0.0]],
        "beta_true": {"0": -2.0, "3": 2.0, "1": 0.3, "2": -0.4, "4": 0.6, "5": 0.0},
        "risk_weights": [1.0, 0.8],
        "feature_noise_sd": 0.02,
        "seed": 29,
        "cohort": os.path.join(out_dir, "cohort.tsv"),
        "bundle": os.path.join(out_dir, "bundle.json"),
        "fractions": [0.7, 0.15, 0.15],
        "split_seed": 29,
        "vocab_min_patients": 25,
        "gam": {
            "inner_bags": 4 if quick else 8,
            "outer_bags": 2,
            "learning_rate": 0.25,
            "max_rounds": 150 if quick else 300,
            "patience": 25,
            "max_bins": 16 if quick else 24,
        },
        "mlp": {
            "learning_rates": [0.05],
            "weight_decays": [1e-4],
            "epochs": 10 if quick else 30,
            "batch_size": 256,
        },
        "split": "test",
        "mode": "exact",
        "top_k": 4,
        "d_common": {"min_patients": 150, "min_mortality": 0.0},
        "harness": {
            "gam": {"inner_bags": 4, "outer_bags": 2, "learning_rate": 0.25,
                    "max_rounds": 100, "patience": 15, "max_bins": 16},
            "min_subset": 60,
        },
        "host": "127.0.0.1",
        "port": 8731,
        "session_timeout_minutes": 30,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo", help="output directory")
    parser.add_argument("--quick", action="store_true",
                        help="smaller cohort and shorter fits")
    parser.add_argument("--static-dir", default=None,
                        help="frontend assets dir to reference in the serve config")
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    config = build_config(args.out, args.quick)
    if args.static_dir:
        config["static_dir"] = args.static_dir
    config_path = os.path.join(args.out, "config.json")
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)

    for command in ("generate", "train"):
        code = cli_main([command, "--config", config_path])
        if code != 0:
            return code
    print(f"demo ready: duacm serve --config {config_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
