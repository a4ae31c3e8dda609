"""Gradient-boosted decision trees with a second-order logistic objective.

Split quality uses the regularized second-order gain with L1 soft-thresholding
of gradient sums; rows with missing values follow a per-split default
direction learned by trying both sides and keeping the gain maximizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit, logit

from .records import FeatureMatrix

ArrayLike = Union[np.ndarray, FeatureMatrix]


@dataclass
class GBTConfig:
    n_trees: int = 512
    subsample_ratio: float = 0.9
    colsample_ratio: float = 0.6
    max_depth: int = 3
    gamma: float = 0.1
    alpha: float = 0.5
    lam: float = 1.0
    learning_rate: float = 0.1
    base_score: float = 0.5
    min_child_hessian: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if not (0.0 < self.subsample_ratio <= 1.0):
            raise ValueError("subsample_ratio must be in (0, 1]")
        if not (0.0 < self.colsample_ratio <= 1.0):
            raise ValueError("colsample_ratio must be in (0, 1]")
        # depth 0 means single-leaf trees (intercept-only boosting); useful as
        # a degenerate grid point
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.gamma < 0 or self.alpha < 0 or self.lam < 0 or self.min_child_hessian < 0:
            raise ValueError("gamma, alpha, lam, min_child_hessian must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 < self.base_score < 1.0):
            raise ValueError("base_score must be in (0, 1)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class TreeNode:
    """Internal node (feature/threshold/default_left + children) or leaf (weight)."""

    weight: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    default_left: bool = True
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class GBTModel:
    config: GBTConfig
    feature_names: list[str]
    trees: list[TreeNode]
    base_margin: float
    encoding_map: Optional[dict] = None

    def raw_scores(self, rows: ArrayLike) -> np.ndarray:
        return predict_margin(self, rows)

    def predict_proba(self, rows: ArrayLike) -> np.ndarray:
        return expit(predict_margin(self, rows))


# ---------------------------------------------------------------------------
# objective

def logistic_loss(margins: np.ndarray, labels: np.ndarray) -> float:
    """Mean logistic loss; log(1+exp(m)) - y*m computed overflow-safe."""
    m = np.asarray(margins, dtype=float)
    y = np.asarray(labels, dtype=float)
    return float(np.mean(np.logaddexp(0.0, m) - y * m))


def logistic_grad_hess(margins: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row first and second derivatives of the logistic loss wrt margin."""
    p = expit(np.asarray(margins, dtype=float))
    g = p - np.asarray(labels, dtype=float)
    h = p * (1.0 - p)
    return g, h


def soft_threshold(g: float, alpha: float) -> float:
    if g > alpha:
        return g - alpha
    if g < -alpha:
        return g + alpha
    return 0.0


def _soft_vec(g: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(g > alpha, g - alpha, np.where(g < -alpha, g + alpha, 0.0))


def split_gain(gl: float, hl: float, gr: float, hr: float, config: GBTConfig) -> float:
    """Regularized second-order gain of splitting (gl+gr, hl+hr) into two children."""
    if hl < 0 or hr < 0:
        raise ValueError("hessian sums must be nonnegative")
    a, lam = config.alpha, config.lam
    sl = soft_threshold(gl, a)
    sr = soft_threshold(gr, a)
    sp = soft_threshold(gl + gr, a)
    return 0.5 * (
        sl * sl / (hl + lam) + sr * sr / (hr + lam) - sp * sp / (hl + hr + lam)
    ) - config.gamma


def _gain_vec(gl, hl, gr, hr, config: GBTConfig) -> np.ndarray:
    a, lam = config.alpha, config.lam
    sl = _soft_vec(gl, a)
    sr = _soft_vec(gr, a)
    sp = _soft_vec(gl + gr, a)
    return 0.5 * (
        sl * sl / (hl + lam) + sr * sr / (hr + lam) - sp * sp / (hl + hr + lam)
    ) - config.gamma


# ---------------------------------------------------------------------------
# training

def _leaf_weight(g_sum: float, h_sum: float, config: GBTConfig) -> float:
    return -soft_threshold(g_sum, config.alpha) / (h_sum + config.lam) * config.learning_rate


def _best_split(X, g, h, idx, cols, config: GBTConfig):
    """Exact greedy search over midpoint thresholds of sorted unique values.

    Returns (gain, feature, threshold, default_left) or None. Ties resolve to
    the lowest feature index, then the lowest threshold, then the left
    default direction, so training is order-deterministic. All candidate
    features are scanned in one pass: one stable argsort puts each column's
    missing values last, prefix sums give every left-child aggregate, and the
    winning (threshold, feature) pair falls out of two first-max argmaxes.
    """
    n = idx.size
    if n < 2:
        return None
    gi = g[idx]
    hi = h[idx]
    g_tot = gi.sum()
    h_tot = hi.sum()
    V = X[np.ix_(idx, np.asarray(cols))]
    order = np.argsort(V, axis=0, kind="stable")
    sv = np.take_along_axis(V, order, axis=0)
    cg = np.cumsum(gi[order], axis=0)
    ch = np.cumsum(hi[order], axis=0)
    n_finite = n - np.isnan(V).sum(axis=0)

    # candidate cut k splits sorted rows [0..k] | [k+1..); only boundaries
    # between distinct finite values qualify
    with np.errstate(invalid="ignore"):
        valid = sv[:-1] != sv[1:]
    valid &= np.arange(n - 1)[:, None] < (n_finite - 1)[None, :]
    # feature-major compression preserves the tie order: lowest feature
    # index first, lowest threshold within a feature
    jj, kk = np.nonzero(valid.T)
    if jj.size == 0:
        return None

    last = np.clip(n_finite - 1, 0, n - 1)[None, :]
    g_miss = cg[-1] - np.take_along_axis(cg, last, axis=0)[0]
    h_miss = ch[-1] - np.take_along_axis(ch, last, axis=0)[0]

    gl_fin = cg[kk, jj]
    hl_fin = ch[kk, jj]
    mch = config.min_child_hessian

    gl_left = gl_fin + g_miss[jj]  # missing routed left
    hl_left = hl_fin + h_miss[jj]
    gains_l = _gain_vec(gl_left, hl_left, g_tot - gl_left, h_tot - hl_left, config)
    okl = (hl_left >= mch) & (h_tot - hl_left >= mch)
    gains_l = np.where(okl, gains_l, -np.inf)

    gains_r = _gain_vec(gl_fin, hl_fin, g_tot - gl_fin, h_tot - hl_fin, config)
    okr = (hl_fin >= mch) & (h_tot - hl_fin >= mch)
    gains_r = np.where(okr, gains_r, -np.inf)

    take_left = gains_l >= gains_r  # tie prefers the left default
    gains = np.where(take_left, gains_l, gains_r)

    m = int(np.argmax(gains))  # first max = lowest feature, then lowest threshold
    if not np.isfinite(gains[m]):
        return None
    k, j = int(kk[m]), int(jj[m])
    threshold = 0.5 * (sv[k, j] + sv[k + 1, j])
    return (float(gains[m]), int(cols[j]), float(threshold), bool(take_left[m]))


def _build_node(X, g, h, idx, cols, depth, config: GBTConfig) -> TreeNode:
    g_sum = float(g[idx].sum())
    h_sum = float(h[idx].sum())
    leaf = TreeNode(weight=_leaf_weight(g_sum, h_sum, config))
    if depth >= config.max_depth or idx.size < 2:
        return leaf
    found = _best_split(X, g, h, idx, cols, config)
    if found is None or found[0] <= 0.0:
        # splits are kept only for strictly positive gain
        return leaf
    _, feature, threshold, default_left = found
    v = X[idx, feature]
    miss = np.isnan(v)
    go_left = ((v < threshold) & ~miss) | (miss & default_left)
    return TreeNode(
        feature=feature,
        threshold=threshold,
        default_left=default_left,
        left=_build_node(X, g, h, idx[go_left], cols, depth + 1, config),
        right=_build_node(X, g, h, idx[~go_left], cols, depth + 1, config),
    )


def _as_values(rows: ArrayLike, n_features: Optional[int] = None) -> np.ndarray:
    X = rows.values if isinstance(rows, FeatureMatrix) else np.asarray(rows, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def train_gbt(matrix: FeatureMatrix, config: GBTConfig) -> GBTModel:
    if matrix.labels is None:
        raise ValueError("training requires a labeled matrix")
    X = np.asarray(matrix.values, dtype=float)
    y = np.asarray(matrix.labels, dtype=float)
    n, d = X.shape
    if n == 0:
        raise ValueError("empty matrix")
    if len(np.unique(y)) < 2:
        raise ValueError("training requires both classes present")

    rng = np.random.default_rng(config.seed)
    base_margin = float(logit(config.base_score))
    margins = np.full(n, base_margin)
    n_rows = max(1, int(round(config.subsample_ratio * n)))
    n_cols = max(1, int(round(config.colsample_ratio * d)))

    trees: list[TreeNode] = []
    for _ in range(config.n_trees):
        g, h = logistic_grad_hess(margins, y)
        rows = np.sort(rng.choice(n, size=n_rows, replace=False)) if n_rows < n else np.arange(n)
        cols = np.sort(rng.choice(d, size=n_cols, replace=False)) if n_cols < d else np.arange(d)
        root = _build_node(X, g, h, rows, cols, 0, config)
        trees.append(root)
        margins += _tree_margins(root, X)
    return GBTModel(
        config=config,
        feature_names=list(matrix.feature_names),
        trees=trees,
        base_margin=base_margin,
        encoding_map=matrix.encoding_map,
    )


# ---------------------------------------------------------------------------
# prediction

def _tree_margins(root: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[0])
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] += node.weight
            continue
        v = X[idx, node.feature]
        miss = np.isnan(v)
        go_left = ((v < node.threshold) & ~miss) | (miss & node.default_left)
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def predict_margin(model: GBTModel, rows: ArrayLike) -> np.ndarray:
    X = _as_values(rows, len(model.feature_names))
    margins = np.full(X.shape[0], model.base_margin)
    for tree in model.trees:
        margins += _tree_margins(tree, X)
    return margins


def predict_proba(model: GBTModel, rows: ArrayLike) -> np.ndarray:
    return expit(predict_margin(model, rows))


def split_count_importance(model: GBTModel) -> dict[str, float]:
    """Share of ensemble splits landing on each feature (sums to 1)."""
    counts: dict[str, int] = {}
    def walk(node: TreeNode) -> None:
        if node.is_leaf:
            return
        name = model.feature_names[node.feature]
        counts[name] = counts.get(name, 0) + 1
        walk(node.left)
        walk(node.right)
    for tree in model.trees:
        walk(tree)
    total = sum(counts.values())
    if total == 0:
        return {}
    return {name: c / total for name, c in sorted(counts.items())}
