"""Versioned JSON model files.

Layout (``schema_version`` 1)::

    {"schema_version": 1, "kind": "forest" | "linear",
     "feature_names": [...], "frame_type": "I" | "P" | "B" | null,
     "log_target": bool,
     # linear
     "weights": [...], "intercept": float,
     # forest
     "seed": int, "hyperparams": {...}, "y_range": [lo, hi],
     "normalization": {"mean": [...], "scale": [...]},
     "trees": [{"feature": [...], "threshold": [...], "left": [...],
                "right": [...], "value": [...], "n_samples": [...],
                "gain": [...]}, ...]}

Leaves have ``feature == -1`` and child index ``-1``.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import CorruptFile, VersionMismatch
from .forest import ForestModel, ForestParams, Tree
from .linear import LinearModel
from .scaling import Standardizer

SCHEMA_VERSION = 1
_TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "n_samples", "gain")
_INT_FIELDS = {"feature", "left", "right", "n_samples"}


def model_to_dict(model) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "kind": model.kind,
        "feature_names": list(model.feature_names),
        "frame_type": model.frame_type,
        "log_target": bool(model.log_target),
    }
    if model.kind == "linear":
        d["weights"] = model.weights.tolist()
        d["intercept"] = model.intercept
        return d
    d["seed"] = model.seed
    d["hyperparams"] = model.hyperparams()
    d["y_range"] = list(model.y_range)
    d["normalization"] = model.scaler.to_dict()
    d["trees"] = [{f: getattr(t, f).tolist() for f in _TREE_FIELDS}
                  for t in model.trees]
    return d


def model_from_dict(d: dict):
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise VersionMismatch(
            f"model schema version {version!r} is not supported (expected {SCHEMA_VERSION})"
        )
    try:
        kind = d["kind"]
        names = d["feature_names"]
        if kind == "linear":
            return LinearModel(d["weights"], d["intercept"], names,
                               d.get("frame_type"), d.get("log_target", False))
        if kind != "forest":
            raise CorruptFile(f"unknown model kind {kind!r}")
        trees = []
        for t in d["trees"]:
            arrays = [np.asarray(t[f], dtype=np.int32 if f in _INT_FIELDS else np.float64)
                      for f in _TREE_FIELDS]
            trees.append(Tree(*arrays))
        return ForestModel(trees, ForestParams(**d["hyperparams"]),
                           Standardizer.from_dict(d["normalization"]), names,
                           d.get("frame_type"), d["seed"], tuple(d["y_range"]),
                           d.get("log_target", False))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"malformed model document: {exc}") from None


def dumps_model(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def load_model(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: not a valid model file ({exc})") from None
    if not isinstance(d, dict):
        raise CorruptFile(f"{path}: not a valid model file")
    return model_from_dict(d)
