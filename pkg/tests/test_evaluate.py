"""Metrics, grouped cross-validation, learning curves, grid search."""

from __future__ import annotations

import numpy as np
import pytest

from aquarisk import (
    CvReport,
    GBTConfig,
    cross_validate,
    grid_search,
    learning_curve,
    rank_auc,
    recall_at_threshold,
    roc_auc,
    train_gbt,
)
from aquarisk.evaluate import (
    METRICS,
    MODEL_KINDS,
    _rows_for,
    accuracy,
    distinct_parcels,
    group_folds,
    mse,
)

from conftest import make_matrix


def _pairwise_auc(scores, labels):
    """O(n^2) oracle: wins + half-ties over positive/negative pairs."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pos = s[y == 1]
    neg = s[y == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def _informative(n, seed, n_parcels=None):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    labels = (1.5 * X[:, 0] + rng.logistic(0, 1, n) > 0).astype(int)
    k = n_parcels or n
    return make_matrix(X, labels=labels, parcel_ids=[f"P{i % k}" for i in range(n)])


# ---------------------------------------------------------------------------
# rank AUC


def test_rank_auc_matches_pairwise_oracle_with_ties():
    rng = np.random.default_rng(30)
    for _ in range(25):
        n = int(rng.integers(4, 60))
        scores = rng.integers(0, 6, size=n).astype(float)  # heavy ties
        labels = rng.integers(0, 2, size=n)
        if len(np.unique(labels)) < 2:
            labels[:2] = [0, 1]
        assert rank_auc(scores, labels) == _pairwise_auc(scores, labels)


def test_rank_auc_hand_case():
    assert rank_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_rank_auc_separated_is_one_and_reversed_is_zero():
    scores = [0.1, 0.2, 0.8, 0.9]
    assert rank_auc(scores, [0, 0, 1, 1]) == 1.0
    assert rank_auc(scores, [1, 1, 0, 0]) == 0.0
    assert rank_auc([0.3, 0.3, 0.3], [0, 1, 1]) == 0.5  # all tied


def test_rank_auc_of_random_scores_is_near_half():
    rng = np.random.default_rng(31)
    scores = rng.normal(size=10000)
    labels = rng.integers(0, 2, size=10000)
    assert abs(rank_auc(scores, labels) - 0.5) <= 0.02


def test_rank_auc_is_invariant_to_order_preserving_transforms():
    rng = np.random.default_rng(32)
    scores = rng.normal(size=200)
    labels = rng.integers(0, 2, size=200)
    base = rank_auc(scores, labels)
    assert rank_auc(0.5 * scores - 3.0, labels) == base
    assert rank_auc(np.exp(scores), labels) == base


def test_rank_auc_requires_both_classes():
    with pytest.raises(ValueError, match="both classes"):
        rank_auc([0.1, 0.2], [1, 1])


# ---------------------------------------------------------------------------
# ROC curve


def test_roc_trapezoid_area_equals_rank_auc():
    rng = np.random.default_rng(33)
    scores = rng.integers(0, 8, size=300).astype(float)  # ties -> diagonal runs
    labels = (scores + rng.normal(0, 3, 300) > 4).astype(int)
    curve = roc_auc(scores, labels)
    area = np.trapezoid(curve.tpr, curve.fpr)
    assert curve.auc == rank_auc(scores, labels)
    assert area == pytest.approx(curve.auc, abs=1e-12)


def test_roc_curve_shape():
    curve = roc_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
    assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
    assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)
    assert all(b >= a for a, b in zip(curve.fpr, curve.fpr[1:]))
    assert all(b >= a for a, b in zip(curve.tpr, curve.tpr[1:]))
    assert all(b < a for a, b in zip(curve.thresholds, curve.thresholds[1:]))


# ---------------------------------------------------------------------------
# thresholded metrics


def test_recall_examples():
    assert recall_at_threshold([0.9, 0.8, 0.1], [1, 1, 0], 0.5) == 1.0
    assert recall_at_threshold([0.9, 0.3], [1, 1], 0.5) == 0.5
    assert recall_at_threshold([0.9, 0.3], [1, 1], 0.0) == 1.0
    with pytest.raises(ValueError, match="positives"):
        recall_at_threshold([0.9], [0])


def test_accuracy_and_mse_hand_cases():
    assert accuracy([0.9, 0.4, 0.6], [1, 0, 0]) == pytest.approx(2 / 3)
    assert mse([0.5, 1.0], [0, 1]) == 0.125
    assert set(METRICS) == {"auc", "recall", "accuracy", "mse"}
    assert set(MODEL_KINDS) == {"gbt", "adaboost"}


# ---------------------------------------------------------------------------
# grouped folds


def test_group_folds_partition_ten_parcels_into_five_pairs():
    ids = [f"P{i}" for i in range(10)]
    folds = group_folds(ids, 5, np.random.default_rng(0))
    assert [len(f) for f in folds] == [2, 2, 2, 2, 2]
    union = set().union(*folds)
    assert union == set(ids)
    for i, a in enumerate(folds):
        for b in folds[i + 1:]:
            assert a.isdisjoint(b)


def test_group_folds_operate_on_distinct_parcels():
    ids = ["A", "A", "B", "B", "C", "D"]
    assert distinct_parcels(ids) == ["A", "B", "C", "D"]
    folds = group_folds(ids, 2, np.random.default_rng(1))
    assert sorted(len(f) for f in folds) == [2, 2]


def test_group_folds_validation():
    with pytest.raises(ValueError, match=">= 2"):
        group_folds(["A", "B"], 1, np.random.default_rng(0))
    with pytest.raises(ValueError, match="exceed"):
        group_folds(["A", "B"], 3, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# cross-validation


def test_cv_report_is_recomputable_from_its_values():
    matrix = _informative(160, seed=34, n_parcels=40)
    cfg = GBTConfig(n_trees=10, max_depth=2)
    report = cross_validate(matrix, "gbt", cfg, folds=4, n_runs=3, seed=5)
    assert isinstance(report, CvReport)
    assert len(report.values) == 3
    assert report.mean == pytest.approx(np.mean(report.values), abs=1e-15)
    assert report.sd == pytest.approx(np.std(report.values, ddof=1), abs=1e-15)
    assert (report.folds, report.n_runs, report.seed, report.metric) == (4, 3, 5, "auc")


def test_cv_detects_real_signal():
    matrix = _informative(300, seed=35, n_parcels=100)
    report = cross_validate(matrix, "gbt", GBTConfig(n_trees=25, max_depth=2), folds=5)
    assert report.mean > 0.75


def test_cv_is_deterministic_per_seed():
    matrix = _informative(120, seed=36, n_parcels=30)
    cfg = GBTConfig(n_trees=8)
    a = cross_validate(matrix, "gbt", cfg, folds=3, seed=2)
    b = cross_validate(matrix, "gbt", cfg, folds=3, seed=2)
    assert a.values == b.values


def test_cv_raises_when_no_fold_is_scorable():
    # one all-positive parcel, one all-negative: each fold's training side
    # is single-class, so every fold is skipped
    matrix = make_matrix(
        [[0.0], [0.1], [1.0], [1.1]],
        labels=[1, 1, 0, 0],
        parcel_ids=["A", "A", "B", "B"],
    )
    with pytest.raises(ValueError, match="no fold"):
        cross_validate(matrix, "gbt", GBTConfig(n_trees=2), folds=2)


def test_cv_validates_inputs():
    matrix = _informative(40, seed=37, n_parcels=10)
    with pytest.raises(ValueError, match="unknown metric"):
        cross_validate(matrix, "gbt", GBTConfig(n_trees=2), metric="f1")
    with pytest.raises(ValueError, match="unknown model kind"):
        cross_validate(matrix, "forest", GBTConfig(n_trees=2))
    unlabeled = make_matrix([[0.0], [1.0]])
    with pytest.raises(ValueError, match="labeled"):
        cross_validate(unlabeled, "gbt", GBTConfig(n_trees=2))


# ---------------------------------------------------------------------------
# learning curve


def test_learning_curve_at_full_fraction_reproduces_plain_folds():
    matrix = _informative(150, seed=38, n_parcels=50)
    cfg = GBTConfig(n_trees=8, max_depth=2)
    folds, seed = 3, 4
    report = learning_curve(matrix, cfg, fractions=[0.5, 1.0], folds=folds, seed=seed)

    fold_sets = group_folds(matrix.parcel_ids, folds, np.random.default_rng(seed))
    vals, trains = [], []
    for held_out in fold_sets:
        test_idx = _rows_for(matrix, held_out)
        train_idx = _rows_for(
            matrix, {p for p in matrix.parcel_ids if p not in held_out}
        )
        train, test = matrix.subset(train_idx), matrix.subset(test_idx)
        if len(np.unique(train.labels)) < 2 or len(np.unique(test.labels)) < 2:
            continue
        model = train_gbt(train, cfg)
        trains.append(rank_auc(model.predict_proba(train), train.labels))
        vals.append(rank_auc(model.predict_proba(test), test.labels))
    assert report.val_mean[-1] == float(np.mean(vals))
    assert report.train_mean[-1] == float(np.mean(trains))


def test_learning_curve_grows_and_generalizes():
    matrix = _informative(800, seed=39, n_parcels=400)
    cfg = GBTConfig(n_trees=30, max_depth=2)
    report = learning_curve(matrix, cfg, fractions=[0.15, 0.4, 1.0], folds=3, seed=0)
    vals = report.val_mean
    assert all(v is not None for v in vals)
    assert all(b >= a - 0.05 for a, b in zip(vals, vals[1:]))
    assert report.train_mean[-1] - vals[-1] < 0.08


def test_learning_curve_reports_undefined_cells_as_absent():
    # positives live in a single parcel: each fold either trains without
    # positives or validates without them, so every cell is undefined
    matrix = make_matrix(
        np.arange(8, dtype=float).reshape(8, 1),
        labels=[1, 1, 0, 0, 0, 0, 0, 0],
        parcel_ids=["A", "A", "B", "B", "C", "C", "D", "D"],
    )
    report = learning_curve(matrix, GBTConfig(n_trees=2), fractions=[1.0], folds=2)
    assert report.val_mean == [None]
    assert report.train_mean == [None]


def test_learning_curve_validates_fractions():
    matrix = _informative(40, seed=40, n_parcels=10)
    with pytest.raises(ValueError, match="strictly increasing"):
        learning_curve(matrix, GBTConfig(n_trees=2), fractions=[0.5, 0.5])
    with pytest.raises(ValueError, match="strictly increasing"):
        learning_curve(matrix, GBTConfig(n_trees=2), fractions=[0.5, 1.2])


# ---------------------------------------------------------------------------
# grid search


def test_grid_search_singleton_grid_returns_that_point():
    matrix = _informative(100, seed=41, n_parcels=25)
    best, table = grid_search(matrix, "gbt", {"n_trees": [5]}, folds=3)
    assert best == {"n_trees": 5}
    assert len(table) == 1
    assert table[0][0] == {"n_trees": 5}


def test_grid_search_enumerates_the_full_product():
    matrix = _informative(100, seed=42, n_parcels=25)
    grid = {"n_trees": [3, 6], "max_depth": [1, 2, 3]}
    best, table = grid_search(matrix, "gbt", grid, folds=3)
    assert len(table) == 6
    points = [tuple(sorted(p.items())) for p, _ in table]
    assert len(set(points)) == 6
    assert best in [p for p, _ in table]


def test_grid_search_prefers_structure_over_the_intercept_model():
    matrix = _informative(200, seed=43, n_parcels=50)
    best, _ = grid_search(
        matrix, "gbt", {"max_depth": [0, 2], "n_trees": [15]}, folds=3
    )
    assert best["max_depth"] == 2


def test_grid_search_breaks_exact_ties_lexicographically():
    # perfectly separable data saturates the metric at every depth
    labels = np.repeat([0, 1], 15)
    X = labels[:, None].astype(float)
    matrix = make_matrix(X, labels=labels, parcel_ids=[f"P{i}" for i in range(30)])
    best, table = grid_search(
        matrix, "gbt", {"max_depth": [2, 1], "n_trees": [10]}, folds=3
    )
    assert all(r.mean == 1.0 for _, r in table)
    assert best == {"max_depth": 1, "n_trees": 10}


def test_grid_search_validates_inputs():
    matrix = _informative(40, seed=44, n_parcels=10)
    with pytest.raises(ValueError, match="nonempty"):
        grid_search(matrix, "gbt", {})
    with pytest.raises(ValueError, match="nonempty"):
        grid_search(matrix, "gbt", {"n_trees": []})
    with pytest.raises(ValueError, match="unknown model kind"):
        grid_search(matrix, "forest", {"n_trees": [2]})
