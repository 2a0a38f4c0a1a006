"""Text serialization of fitted rankers.

Models are stored as a self-describing JSON document (sorted keys, full
float precision via the shortest round-trip repr), so ``load(save(m))``
reproduces bit-identical scores.  Tree split features are written with the
external 1-based feature ids.
"""
from __future__ import annotations

import json

import numpy as np

from .errors import DataError
from .lambdamart import LambdaMARTRanker
from .ranknet import RankNetRanker
from .trees import RegressionTree

FORMAT_NAME = "rankdistill/model"
FORMAT_VERSION = 1


def _tree_to_dict(tree: RegressionTree) -> dict:
    split = np.where(tree.feature >= 0, tree.feature + 1, -1)  # 1-based, -1 = leaf
    return {
        "split_feature": split.tolist(),
        "threshold": tree.threshold.tolist(),
        "left_child": tree.left.tolist(),
        "right_child": tree.right.tolist(),
        "value": tree.value.tolist(),
    }


def _tree_from_dict(d: dict) -> RegressionTree:
    split = np.asarray(d["split_feature"], dtype=np.intp)
    return RegressionTree(
        feature=np.where(split >= 1, split - 1, -1),
        threshold=np.asarray(d["threshold"], dtype=np.float64),
        left=np.asarray(d["left_child"], dtype=np.intp),
        right=np.asarray(d["right_child"], dtype=np.intp),
        value=np.asarray(d["value"], dtype=np.float64),
    )


def model_to_dict(model) -> dict:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "params": _jsonable_params(model.get_params()),
        "feature_dim": int(model.n_features_in_),
    }
    if isinstance(model, LambdaMARTRanker):
        doc["kind"] = "lambdamart"
        doc["trees"] = [_tree_to_dict(t) for t in model.trees_]
    elif isinstance(model, RankNetRanker):
        doc["kind"] = "ranknet"
        doc["weights"] = {
            "hidden_weight": model.coefs_[0].tolist(),
            "hidden_bias": model.intercepts_[0].tolist(),
            "output_weight": model.coefs_[1].tolist(),
            "output_bias": float(model.intercepts_[1]),
        }
    else:
        raise TypeError(f"cannot serialize model of type {type(model).__name__}")
    return doc


def _jsonable_params(params: dict) -> dict:
    out = {}
    for key, value in params.items():
        if isinstance(value, tuple):
            value = list(value)
        elif hasattr(value, "ids"):  # FeatureSubset
            value = list(value.ids)
        out[key] = value
    return out


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT_NAME:
        raise DataError("not a rankdistill model document")
    kind = doc.get("kind")
    params = doc.get("params", {})
    if kind == "lambdamart":
        model = LambdaMARTRanker(**params)
        model.trees_ = [_tree_from_dict(t) for t in doc["trees"]]
        model.best_iteration_ = len(model.trees_) - 1
        model.validation_scores_ = []
    elif kind == "ranknet":
        model = RankNetRanker(**params)
        w = doc["weights"]
        model.coefs_ = (
            np.asarray(w["hidden_weight"], dtype=np.float64),
            np.asarray(w["output_weight"], dtype=np.float64),
        )
        model.intercepts_ = (
            np.asarray(w["hidden_bias"], dtype=np.float64),
            np.asarray(w["output_bias"], dtype=np.float64),
        )
        model.validation_scores_ = []
    else:
        raise DataError(f"unknown model kind {kind!r}")
    model.n_features_in_ = int(doc["feature_dim"])
    return model


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed model file {path}: {exc}") from exc
    return model_from_dict(doc)
