"""Versioned JSON persistence for tree models and linear fits.

Trees are written as nested node records::

    {"feature": 3, "threshold": 0.5, "value": ..., "cover": ...,
     "left": {...}, "right": {...}}

and leaves as ``{"value": ..., "cover": ...}``.  Floats are written with
``repr`` precision, so loading reproduces predictions bit for bit.
"""

from __future__ import annotations

import json
from collections import deque

import numpy as np

from .forest import Forest
from .gbdt import Ensemble, RegressionTree
from .linear import LinearModel

FORMAT = "eventflow-model"
VERSION = 1


def tree_to_record(tree: RegressionTree, k: int = 0) -> dict:
    rec = {"value": float(tree.value[k]), "cover": float(tree.cover[k])}
    if tree.feature[k] >= 0:
        rec = {"feature": int(tree.feature[k]), "threshold": float(tree.threshold[k]), **rec,
               "left": tree_to_record(tree, int(tree.left[k])),
               "right": tree_to_record(tree, int(tree.right[k]))}
    return rec


def tree_from_record(rec: dict) -> RegressionTree:
    """Rebuild node arrays in breadth-first order (the order trees are grown in)."""
    nodes = []
    queue = deque([rec])
    while queue:
        nodes.append(queue.popleft())
        if "feature" in nodes[-1]:
            queue.append(nodes[-1]["left"])
            queue.append(nodes[-1]["right"])
    m = len(nodes)
    feature = np.full(m, -1, dtype=np.int64)
    left = np.full(m, -1, dtype=np.int64)
    right = np.full(m, -1, dtype=np.int64)
    threshold, value, cover = np.zeros(m), np.zeros(m), np.zeros(m)
    nxt = 1
    for k, node in enumerate(nodes):
        value[k], cover[k] = node["value"], node["cover"]
        if "feature" in node:
            feature[k], threshold[k] = node["feature"], node["threshold"]
            left[k], right[k] = nxt, nxt + 1
            nxt += 2
    return RegressionTree(feature, threshold, left, right, value, cover)


def model_to_dict(model, params: dict | None = None) -> dict:
    out = {"format": FORMAT, "version": VERSION}
    if isinstance(model, Ensemble):
        out.update(kind="gbdt", base_score=model.base_score, learning_rate=model.learning_rate,
                   n_features=model.n_features,
                   feature_names=list(model.feature_names) if model.feature_names else None,
                   trees=[tree_to_record(t) for t in model.trees])
    elif isinstance(model, Forest):
        out.update(kind="rf", n_features=model.n_features, trees=[tree_to_record(t) for t in model.trees])
    elif isinstance(model, LinearModel):
        out.update(kind="linear", coef=[float(c) for c in model.coef], intercept=model.intercept,
                   ridge=model.ridge)
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    if params is not None:
        out["params"] = params
    return out


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ValueError("not an eventflow model file")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}")
    kind = d["kind"]
    if kind == "gbdt":
        return Ensemble(d["base_score"], d["learning_rate"], [tree_from_record(t) for t in d["trees"]],
                        d["n_features"], d.get("feature_names"))
    if kind == "rf":
        return Forest([tree_from_record(t) for t in d["trees"]], d["n_features"])
    if kind == "linear":
        return LinearModel(np.array(d["coef"], dtype=float), float(d["intercept"]), float(d["ridge"]))
    raise ValueError(f"unknown model kind {kind!r}")


def dumps(model, params: dict | None = None) -> str:
    return json.dumps(model_to_dict(model, params), sort_keys=False) + "\n"


def loads(text: str):
    return model_from_dict(json.loads(text))
