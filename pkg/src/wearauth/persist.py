"""JSON persistence for trained models.

Floats are written with ``repr`` precision by :mod:`json`, so a round trip
reproduces every coefficient exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CorruptFile, SchemaVersionMismatch
from .svm import KernelSpec, TrainedModel

SCHEMA_VERSION = 1


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": model.kind,
        "subject_id": model.subject_id,
        "kernel": {"kind": model.kernel.kind, "gamma": model.kernel.gamma,
                   "degree": model.kernel.degree},
        "norm_stats": {"mean": model.norm_mean.tolist(), "std": model.norm_std.tolist()},
        "support_vectors": model.support_vectors.tolist(),
        "alphas": model.alphas.tolist(),
        "labels": model.labels.tolist(),
        "intercept": model.intercept,
        "platt": None if model.platt is None else list(model.platt),
        "feature_names": list(model.feature_names),
        "feature_set": model.feature_set,
        "config": model.config,
        "info": model.info,
    }


def model_from_dict(doc: dict) -> TrainedModel:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"model schema {version!r}, expected {SCHEMA_VERSION}")
    try:
        n_features = len(doc["norm_stats"]["mean"])
        sv = np.asarray(doc["support_vectors"], dtype=float).reshape(-1, n_features)
        return TrainedModel(
            kind=doc["kind"],
            kernel=KernelSpec(**doc["kernel"]),
            support_vectors=sv,
            alphas=np.asarray(doc["alphas"], dtype=float),
            labels=np.asarray(doc["labels"], dtype=float),
            intercept=float(doc["intercept"]),
            norm_mean=np.asarray(doc["norm_stats"]["mean"], dtype=float),
            norm_std=np.asarray(doc["norm_stats"]["std"], dtype=float),
            platt=None if doc.get("platt") is None else tuple(doc["platt"]),
            feature_names=list(doc.get("feature_names", [])),
            feature_set=doc.get("feature_set"),
            subject_id=doc.get("subject_id", ""),
            config=doc.get("config", {}),
            info=doc.get("info", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"bad model document: {exc}") from None


def persist_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n")
    return path


def load_model(path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise CorruptFile(f"{path}: not a model document")
    return model_from_dict(doc)
