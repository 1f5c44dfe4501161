"""Shared JSON model file format: single models and the two-model bundle.

Floats survive bit-exactly (JSON emits shortest round-trip representations), so
a reloaded model predicts identically to the one that was saved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort, FeatureSchema, atomic_write_text
from .diagmodel import DiagnosisModel
from .gam import BinningSpec, GamModel, ShapeFunction
from .linmod import LinearModel

BUNDLE_FORMAT = "duacm-bundle"
MODEL_FORMAT = "duacm-model"
SCHEMA_VERSION = 1


class ModelIOError(ValueError):
    pass


@dataclass
class ModelBundle:
    outcome_model: GamModel
    diagnosis_model: DiagnosisModel
    schema: FeatureSchema
    vocabulary: list[str]
    provenance: dict = field(default_factory=dict)

    def validate(self):
        if self.outcome_model.diagnosis_vocab is not None:
            if list(self.outcome_model.diagnosis_vocab) != list(self.vocabulary):
                raise ModelIOError("outcome model vocabulary differs from bundle vocabulary")
        if list(self.diagnosis_model.vocabulary) != list(self.vocabulary):
            raise ModelIOError("diagnosis model vocabulary differs from bundle vocabulary")
        if self.outcome_model.n_features != self.schema.n_features:
            raise ModelIOError("outcome model arity differs from schema")
        if self.diagnosis_model.n_features != self.schema.n_features:
            raise ModelIOError("diagnosis model arity differs from schema")
        return self


def _gam_to_dict(model: GamModel):
    return {
        "type": "gam",
        "intercept": model.intercept,
        "cuts": [c.tolist() for c in model.binning.cuts],
        "max_bins": model.binning.max_bins,
        "shapes": [s.contributions.tolist() for s in model.shapes],
        "bin_weights": [s.bin_weights.tolist() for s in model.shapes],
        "diagnosis_offsets": sorted(
            [[int(d), float(v)] for d, v in model.diagnosis_offsets.items()]
        ),
        "diagnosis_weights": (
            None if model.diagnosis_weights is None else model.diagnosis_weights.tolist()
        ),
        "diagnosis_vocab": model.diagnosis_vocab,
        "metadata": model.metadata,
    }


def _gam_from_dict(data) -> GamModel:
    binning = BinningSpec([np.asarray(c, dtype=float) for c in data["cuts"]],
                          int(data["max_bins"]))
    shapes = [
        ShapeFunction(j, np.asarray(contrib, dtype=float), np.asarray(w, dtype=float))
        for j, (contrib, w) in enumerate(zip(data["shapes"], data["bin_weights"]))
    ]
    weights = data.get("diagnosis_weights")
    return GamModel(
        intercept=float(data["intercept"]),
        shapes=shapes,
        binning=binning,
        diagnosis_offsets={int(d): float(v) for d, v in data["diagnosis_offsets"]},
        diagnosis_weights=None if weights is None else np.asarray(weights, dtype=float),
        diagnosis_vocab=data.get("diagnosis_vocab"),
        metadata=data.get("metadata", {}),
    )


def _mlp_to_dict(model: DiagnosisModel):
    return {
        "type": "mlp",
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "standardization": {
            "mean": model.standardization[0].tolist(),
            "sd": model.standardization[1].tolist(),
        },
        "vocabulary": model.vocabulary,
        "metadata": model.metadata,
    }


def _mlp_from_dict(data) -> DiagnosisModel:
    return DiagnosisModel(
        weights=[np.asarray(w, dtype=float) for w in data["weights"]],
        biases=[np.asarray(b, dtype=float) for b in data["biases"]],
        standardization=(
            np.asarray(data["standardization"]["mean"], dtype=float),
            np.asarray(data["standardization"]["sd"], dtype=float),
        ),
        vocabulary=list(data["vocabulary"]),
        metadata=data.get("metadata", {}),
    )


def _linear_to_dict(model: LinearModel):
    return {
        "type": "logistic",
        "weights": model.weights.tolist(),
        "intercept": model.intercept,
        "lambda": model.lam,
        "standardization": {
            "mean": model.standardization[0].tolist(),
            "sd": model.standardization[1].tolist(),
        },
        "cv_table": [[lam, loss] for lam, loss in model.cv_table],
    }


def _linear_from_dict(data) -> LinearModel:
    return LinearModel(
        weights=np.asarray(data["weights"], dtype=float),
        intercept=float(data["intercept"]),
        lam=float(data["lambda"]),
        standardization=(
            np.asarray(data["standardization"]["mean"], dtype=float),
            np.asarray(data["standardization"]["sd"], dtype=float),
        ),
        cv_table=[(float(l), float(v)) for l, v in data["cv_table"]],
    )


_TO_DICT = {GamModel: _gam_to_dict, DiagnosisModel: _mlp_to_dict,
            LinearModel: _linear_to_dict}
_FROM_DICT = {"gam": _gam_from_dict, "mlp": _mlp_from_dict,
              "logistic": _linear_from_dict}


def save_model(model, path):
    payload = {
        "format": MODEL_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "model": _TO_DICT[type(model)](model),
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ModelIOError(f"{path}: not a {MODEL_FORMAT} file")
    kind = payload["model"].get("type")
    if kind not in _FROM_DICT:
        raise ModelIOError(f"{path}: unknown model type {kind!r}")
    return _FROM_DICT[kind](payload["model"])


def save_bundle(bundle: ModelBundle, path):
    bundle.validate()
    payload = {
        "format": BUNDLE_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "schema": {
            "feature_names": bundle.schema.names,
            "feature_ranges": [[lo, hi] for lo, hi in bundle.schema.ranges],
        },
        "vocabulary": bundle.vocabulary,
        "outcome_model": _gam_to_dict(bundle.outcome_model),
        "diagnosis_model": _mlp_to_dict(bundle.diagnosis_model),
        "provenance": bundle.provenance,
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True))


def load_bundle(path) -> ModelBundle:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != BUNDLE_FORMAT:
        raise ModelIOError(f"{path}: not a {BUNDLE_FORMAT} file")
    schema = FeatureSchema(
        list(payload["schema"]["feature_names"]),
        [tuple(r) for r in payload["schema"]["feature_ranges"]],
    )
    bundle = ModelBundle(
        outcome_model=_gam_from_dict(payload["outcome_model"]),
        diagnosis_model=_mlp_from_dict(payload["diagnosis_model"]),
        schema=schema,
        vocabulary=list(payload["vocabulary"]),
        provenance=payload.get("provenance", {}),
    )
    return bundle.validate()


def restrict_vocabulary(cohort: Cohort, keep_ids) -> Cohort:
    """Labeled records with a kept diagnosis, remapped onto a compact vocabulary
    ordered by original id."""
    keep_ids = sorted(int(d) for d in keep_ids)
    if not keep_ids:
        raise ModelIOError("cannot restrict to an empty vocabulary")
    remap = {d: i for i, d in enumerate(keep_ids)}
    mask = np.isin(cohort.diagnosis, keep_ids)
    idx = np.flatnonzero(mask)
    new_diag = np.array([remap[int(d)] for d in cohort.diagnosis[idx]], dtype=int)
    return Cohort(
        cohort.schema,
        cohort.ids[idx],
        cohort.features[idx],
        new_diag,
        cohort.outcome[idx],
        None if cohort.latent is None else cohort.latent[idx],
        [cohort.diagnosis_vocab[d] for d in keep_ids],
    )
