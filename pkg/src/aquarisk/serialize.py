"""Model persistence: a single self-describing JSON document, version gbt-v1.

Both ensemble kinds share the envelope (version, kind, config, feature names,
encoding map, optional calibration block); trees are stored as preorder lists.
Floats rely on JSON shortest-roundtrip encoding, so save/load is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .adaboost import AdaBoostConfig, AdaBoostModel, WeakLearner, WeakNode
from .calibrate import CalibratedClassifier, CalibrationMap
from .gbt import GBTConfig, GBTModel, TreeNode

FORMAT_VERSION = "gbt-v1"

AnyModel = Union[GBTModel, AdaBoostModel, CalibratedClassifier]


def _flatten_tree(node: TreeNode) -> list[dict]:
    out: list[dict] = []

    def walk(n: TreeNode) -> None:
        if n.is_leaf:
            out.append({"w": n.weight})
        else:
            out.append({"f": n.feature, "t": n.threshold, "d": 1 if n.default_left else 0})
            walk(n.left)
            walk(n.right)

    walk(node)
    return out


def _rebuild_tree(flat: list[dict]) -> TreeNode:
    pos = 0

    def build() -> TreeNode:
        nonlocal pos
        spec = flat[pos]
        pos += 1
        if "w" in spec:
            return TreeNode(weight=float(spec["w"]))
        left = build()
        right = build()
        return TreeNode(
            feature=int(spec["f"]),
            threshold=float(spec["t"]),
            default_left=bool(spec["d"]),
            left=left,
            right=right,
        )

    root = build()
    if pos != len(flat):
        raise ValueError("malformed tree document: trailing nodes")
    return root


def _flatten_weak(node: WeakNode) -> list[dict]:
    out: list[dict] = []

    def walk(n: WeakNode) -> None:
        if n.is_leaf:
            out.append({"c": n.klass})
        else:
            out.append({"f": n.feature, "t": n.threshold, "c": n.klass})
            walk(n.left)
            walk(n.right)

    walk(node)
    return out


def _rebuild_weak(flat: list[dict]) -> WeakNode:
    pos = 0

    def build() -> WeakNode:
        nonlocal pos
        spec = flat[pos]
        pos += 1
        if "f" not in spec:
            return WeakNode(klass=int(spec["c"]))
        left = build()
        right = build()
        return WeakNode(
            klass=int(spec["c"]),
            feature=int(spec["f"]),
            threshold=float(spec["t"]),
            left=left,
            right=right,
        )

    root = build()
    if pos != len(flat):
        raise ValueError("malformed tree document: trailing nodes")
    return root


def model_document(model: AnyModel) -> dict:
    calibration = None
    if isinstance(model, CalibratedClassifier):
        calibration = {
            "kind": model.cal_map.kind,
            "a": model.cal_map.a,
            "b": model.cal_map.b,
            "fit_folds": model.cal_map.fit_folds,
        }
        model = model.base  # unwrap

    if isinstance(model, GBTModel):
        doc = {
            "version": FORMAT_VERSION,
            "kind": "gbt",
            "config": model.config.to_dict(),
            "feature_names": list(model.feature_names),
            "encoding_map": model.encoding_map,
            "base_margin": model.base_margin,
            "trees": [_flatten_tree(t) for t in model.trees],
        }
    elif isinstance(model, AdaBoostModel):
        doc = {
            "version": FORMAT_VERSION,
            "kind": "adaboost",
            "config": model.config.to_dict(),
            "feature_names": list(model.feature_names),
            "encoding_map": model.encoding_map,
            "medians": [float(v) for v in model.medians],
            "indicator_features": list(model.indicator_features),
            "learners": [
                {
                    "alpha": l.alpha,
                    "tree": _flatten_weak(l.tree),
                    "gini_decrease": {str(k): v for k, v in sorted(l.gini_decrease.items())},
                }
                for l in model.learners
            ],
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if calibration is not None:
        doc["calibration"] = calibration
    return doc


def model_from_document(doc: dict) -> AnyModel:
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model document version: {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind == "gbt":
        model: AnyModel = GBTModel(
            config=GBTConfig(**doc["config"]),
            feature_names=list(doc["feature_names"]),
            trees=[_rebuild_tree(t) for t in doc["trees"]],
            base_margin=float(doc["base_margin"]),
            encoding_map=doc.get("encoding_map"),
        )
    elif kind == "adaboost":
        model = AdaBoostModel(
            config=AdaBoostConfig(**doc["config"]),
            feature_names=list(doc["feature_names"]),
            learners=[
                WeakLearner(
                    tree=_rebuild_weak(l["tree"]),
                    alpha=float(l["alpha"]),
                    gini_decrease={int(k): float(v) for k, v in l["gini_decrease"].items()},
                )
                for l in doc["learners"]
            ],
            medians=np.array(doc["medians"], dtype=float),
            indicator_features=[int(j) for j in doc["indicator_features"]],
            encoding_map=doc.get("encoding_map"),
        )
    else:
        raise ValueError(f"unknown model kind: {kind!r}")
    cal = doc.get("calibration")
    if cal is not None:
        return CalibratedClassifier(
            base=model,
            cal_map=CalibrationMap(
                a=float(cal["a"]), b=float(cal["b"]),
                fit_folds=int(cal["fit_folds"]), kind=cal["kind"],
            ),
        )
    return model


def dumps_model(model: AnyModel) -> str:
    return json.dumps(model_document(model), separators=(",", ":"), allow_nan=False)


def loads_model(text: str) -> AnyModel:
    return model_from_document(json.loads(text))


def save_model(model: AnyModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> AnyModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing model: {path}")
    return loads_model(path.read_text(encoding="utf-8"))
