"""Discrete adaptive boosting over shallow weighted-Gini trees.

Used for submission-propensity modeling. Weak learners are depth-bounded
trees grown by maximal weighted Gini impurity decrease; stage weights follow
the standard discrete update alpha = lr * ln((1-err)/err).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .records import FeatureMatrix

ArrayLike = Union[np.ndarray, FeatureMatrix]

# cap for the separable case err == 0; keeps stage weights finite while
# preserving dominance over any realistic opponent sum
_ALPHA_CAP_LOG = math.log(1e12)


@dataclass
class AdaBoostConfig:
    n_estimators: int = 200
    learning_rate: float = 0.2
    weak_depth: int = 1
    seed: int = 0  # reserved for interface symmetry; training is deterministic

    def __post_init__(self) -> None:
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weak_depth < 1:
            raise ValueError("weak_depth must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class WeakNode:
    klass: int = 0
    feature: int = -1
    threshold: float = 0.0
    left: Optional["WeakNode"] = None
    right: Optional["WeakNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class WeakLearner:
    tree: WeakNode
    alpha: float
    # per augmented-feature sums of weighted Gini impurity decrease
    gini_decrease: dict[int, float] = field(default_factory=dict)


@dataclass
class AdaBoostModel:
    config: AdaBoostConfig
    feature_names: list[str]          # original (pre-imputation) columns
    learners: list[WeakLearner]
    medians: np.ndarray               # per original feature, NaN-free
    indicator_features: list[int]     # original indices that grew __missing columns
    encoding_map: Optional[dict] = None
    weight_trace: Optional[list[np.ndarray]] = None  # debug only, never serialized

    @property
    def augmented_names(self) -> list[str]:
        return list(self.feature_names) + [
            f"{self.feature_names[j]}__missing" for j in self.indicator_features
        ]

    def raw_scores(self, rows: ArrayLike) -> np.ndarray:
        return predict_adaboost(self, rows)[0]

    def predict_proba(self, rows: ArrayLike) -> np.ndarray:
        return predict_adaboost(self, rows)[0]


def _augment(X: np.ndarray, medians: np.ndarray, indicator_features: list[int]) -> np.ndarray:
    """Median-impute missing numerics and append missing-indicator columns."""
    out = X.copy()
    nan_mask = np.isnan(out)
    if nan_mask.any():
        out[nan_mask] = np.take(medians, np.nonzero(nan_mask)[1])
    if not indicator_features:
        return out
    flags = np.isnan(X[:, indicator_features]).astype(float)
    return np.hstack([out, flags])


def _gini(w1: float, w0: float) -> float:
    total = w1 + w0
    if total <= 0:
        return 0.0
    p1 = w1 / total
    return 1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)


def _best_weak_split(X, y, w, idx):
    """Max weighted Gini decrease over all features and midpoint thresholds.

    Decrease is measured on the global weight scale (node weight times local
    impurity drop) so recorded values are comparable across nodes. Ties break
    to lowest feature index, then lowest threshold.
    """
    wi = w[idx]
    yi = y[idx]
    w_tot = wi.sum()
    w1_tot = wi[yi == 1].sum()
    parent = w_tot * _gini(w1_tot, w_tot - w1_tot)
    best = None
    for f in range(X.shape[1]):
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        cut = np.nonzero(sv[:-1] != sv[1:])[0]
        if cut.size == 0:
            continue
        cw = np.cumsum(wi[order])
        cw1 = np.cumsum(wi[order] * (yi[order] == 1))
        wl = cw[cut]
        w1l = cw1[cut]
        wr = w_tot - wl
        w1r = w1_tot - w1l
        with np.errstate(divide="ignore", invalid="ignore"):
            p1l = np.where(wl > 0, w1l / wl, 0.0)
            p1r = np.where(wr > 0, w1r / wr, 0.0)
        il = 1.0 - p1l * p1l - (1.0 - p1l) * (1.0 - p1l)
        ir = 1.0 - p1r * p1r - (1.0 - p1r) * (1.0 - p1r)
        dec = parent - wl * il - wr * ir
        k = int(np.argmax(dec))
        if best is None or dec[k] > best[0]:
            thresholds = 0.5 * (sv[cut] + sv[cut + 1])
            best = (float(dec[k]), f, float(thresholds[k]))
    return best


def _fit_weak(X, y, w, idx, depth, max_depth, record: dict[int, float]) -> WeakNode:
    wi = w[idx]
    w1 = wi[y[idx] == 1].sum()
    w0 = wi.sum() - w1
    klass = 1 if w1 > w0 else 0
    if depth >= max_depth or idx.size < 2 or w1 <= 0 or w0 <= 0:
        return WeakNode(klass=klass)
    found = _best_weak_split(X, y, w, idx)
    if found is None or found[0] <= 0.0:
        return WeakNode(klass=klass)
    dec, feature, threshold = found
    record[feature] = record.get(feature, 0.0) + dec
    go_left = X[idx, feature] < threshold
    return WeakNode(
        klass=klass,
        feature=feature,
        threshold=threshold,
        left=_fit_weak(X, y, w, idx[go_left], depth + 1, max_depth, record),
        right=_fit_weak(X, y, w, idx[~go_left], depth + 1, max_depth, record),
    )


def _weak_predict(root: WeakNode, X: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[0], dtype=int)
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = node.klass
            continue
        go_left = X[idx, node.feature] < node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def train_adaboost(
    matrix: FeatureMatrix, config: AdaBoostConfig, trace_weights: bool = False
) -> AdaBoostModel:
    if matrix.labels is None:
        raise ValueError("training requires a labeled matrix")
    X_raw = np.asarray(matrix.values, dtype=float)
    y = np.asarray(matrix.labels, dtype=int)
    n = X_raw.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    if len(np.unique(y)) < 2:
        raise ValueError("training requires both classes present")

    with np.errstate(all="ignore"):
        medians = np.nanmedian(X_raw, axis=0)
    medians = np.where(np.isnan(medians), 0.0, medians)
    indicator_features = [int(j) for j in range(X_raw.shape[1]) if np.isnan(X_raw[:, j]).any()]
    X = _augment(X_raw, medians, indicator_features)

    w = np.full(n, 1.0 / n)
    learners: list[WeakLearner] = []
    trace: list[np.ndarray] = [w.copy()] if trace_weights else []
    all_idx = np.arange(n)
    for _ in range(config.n_estimators):
        record: dict[int, float] = {}
        tree = _fit_weak(X, y, w, all_idx, 0, config.weak_depth, record)
        pred = _weak_predict(tree, X)
        mis = pred != y
        err = float(w[mis].sum())
        if err >= 0.5:
            break  # learner no better than chance; drop it and stop
        if err <= 0.0:
            learners.append(WeakLearner(tree, config.learning_rate * _ALPHA_CAP_LOG, record))
            if trace_weights:
                trace.append(w.copy())
            break
        alpha = config.learning_rate * math.log((1.0 - err) / err)
        learners.append(WeakLearner(tree, alpha, record))
        w = w * np.exp(alpha * mis)
        w = w / w.sum()
        if trace_weights:
            trace.append(w.copy())
    return AdaBoostModel(
        config=config,
        feature_names=list(matrix.feature_names),
        learners=learners,
        medians=medians,
        indicator_features=indicator_features,
        encoding_map=matrix.encoding_map,
        weight_trace=trace if trace_weights else None,
    )


def predict_adaboost(model: AdaBoostModel, rows: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Weighted-vote score in [0,1] and the hard class per row."""
    X_raw = rows.values if isinstance(rows, FeatureMatrix) else np.asarray(rows, dtype=float)
    if X_raw.ndim == 1:
        X_raw = X_raw.reshape(1, -1)
    if X_raw.shape[1] != len(model.feature_names):
        raise ValueError(
            f"expected {len(model.feature_names)} features, got {X_raw.shape[1]}"
        )
    X = _augment(np.asarray(X_raw, dtype=float), model.medians, model.indicator_features)
    n = X.shape[0]
    if not model.learners:
        return np.full(n, 0.5), np.zeros(n, dtype=int)
    alpha_total = sum(l.alpha for l in model.learners)
    vote = np.zeros(n)
    for learner in model.learners:
        vote += learner.alpha * _weak_predict(learner.tree, X)
    scores = vote / alpha_total
    signed = 2.0 * vote - alpha_total  # sum of alpha * (+-1) votes
    classes = (signed > 0).astype(int)  # tie breaks to class 0
    return scores, classes


def gini_importance(model: AdaBoostModel) -> dict[str, float]:
    """Impurity decreases summed per feature, averaged over learners, normalized."""
    if not model.learners:
        return {}
    names = model.augmented_names
    sums: dict[str, float] = {}
    for learner in model.learners:
        for f_idx, dec in learner.gini_decrease.items():
            name = names[f_idx]
            sums[name] = sums.get(name, 0.0) + dec / len(model.learners)
    total = sum(sums.values())
    if total <= 0:
        return {}
    return {name: v / total for name, v in sorted(sums.items())}
