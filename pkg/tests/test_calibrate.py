"""Sigmoid probability calibration and out-of-fold fitting."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.special import logit

from aquarisk import (
    CalibratedClassifier,
    CalibrationMap,
    cross_fit_calibrated,
    fit_calibration,
    rank_auc,
)
from aquarisk.calibrate import apply_calibration
from aquarisk.evaluate import group_folds

from conftest import make_matrix


# ---------------------------------------------------------------------------
# applying a map


def test_zero_map_is_one_half_everywhere():
    cal = CalibrationMap(a=0.0, b=0.0)
    assert apply_calibration(cal, [-100.0, 0.0, 7.5]).tolist() == [0.5, 0.5, 0.5]
    assert apply_calibration(cal, 3.0) == 0.5


def test_negative_slope_gives_strictly_increasing_probabilities():
    cal = CalibrationMap(a=-2.0, b=0.3)
    grid = np.linspace(-5, 5, 101)
    p = apply_calibration(cal, grid)
    assert (np.diff(p) > 0).all()
    assert ((p > 0) & (p < 1)).all()


def test_extreme_scores_do_not_overflow():
    cal = CalibrationMap(a=-3.0, b=1.0)
    p = apply_calibration(cal, [-1e6, 1e6, -1e300, 1e300])
    assert np.isfinite(p).all()
    assert ((p >= 0) & (p <= 1)).all()


def test_map_parameters_must_be_finite():
    with pytest.raises(ValueError, match="finite"):
        CalibrationMap(a=np.nan, b=0.0)
    with pytest.raises(ValueError, match="finite"):
        CalibrationMap(a=0.0, b=np.inf)


# ---------------------------------------------------------------------------
# fitting


def _smoothed_loss(a, b, s, y):
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    z = a * s + b
    return float(np.sum(np.logaddexp(0.0, z) - (1.0 - t) * z))


def test_fit_reaches_the_grid_search_optimum():
    rng = np.random.default_rng(20)
    y = rng.integers(0, 2, size=400)
    s = 1.5 * y + rng.normal(0, 1.0, 400)  # informative but noisy scores
    cal = fit_calibration(s, y)
    fitted = _smoothed_loss(cal.a, cal.b, s, y)
    grid = min(
        _smoothed_loss(a, b, s, y)
        for a in np.linspace(-6, 2, 81)
        for b in np.linspace(-4, 4, 81)
    )
    assert fitted <= grid + 1e-3


def test_well_calibrated_scores_recover_the_identity():
    rng = np.random.default_rng(21)
    p_true = rng.uniform(0.02, 0.98, size=20000)
    scores = logit(p_true)
    labels = (rng.random(20000) < p_true).astype(int)
    cal = fit_calibration(scores, labels)
    probe = np.arange(0.1, 0.91, 0.1)
    fitted = apply_calibration(cal, logit(probe))
    assert np.max(np.abs(fitted - probe)) <= 0.02


def test_constant_scores_collapse_to_the_base_rate():
    rng = np.random.default_rng(22)
    labels = (rng.random(1000) < 0.3).astype(int)
    scores = np.full(1000, 0.7)
    cal = fit_calibration(scores, labels)
    p = apply_calibration(cal, 0.7)
    assert p == pytest.approx(labels.mean(), abs=0.02)


def test_inverting_labels_flips_the_slope_sign():
    rng = np.random.default_rng(23)
    y = rng.integers(0, 2, size=500)
    s = 2.0 * y + rng.normal(0, 1.0, 500)
    aligned = fit_calibration(s, y)
    inverted = fit_calibration(s, 1 - y)
    assert aligned.a < 0  # higher score must mean higher probability
    assert inverted.a > 0


def test_calibration_preserves_the_ranking_exactly():
    rng = np.random.default_rng(24)
    y = rng.integers(0, 2, size=300)
    s = y + rng.normal(0, 1.2, 300)
    cal = fit_calibration(s, y)
    assert rank_auc(apply_calibration(cal, s), y) == rank_auc(s, y)


def test_fit_validates_inputs():
    with pytest.raises(ValueError, match="both classes"):
        fit_calibration([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError, match="finite"):
        fit_calibration([0.1, np.nan], [0, 1])
    with pytest.raises(ValueError, match="aligned"):
        fit_calibration([0.1, 0.2, 0.3], [0, 1])


# ---------------------------------------------------------------------------
# cross-fit protocol


class _ScoreByFirstColumn:
    def __init__(self, shift=0.0):
        self.shift = shift

    def raw_scores(self, rows):
        X = rows.values if hasattr(rows, "values") else np.asarray(rows, dtype=float)
        return X[:, 0] + self.shift


def test_cross_fit_trains_on_the_complement_of_each_fold():
    rng = np.random.default_rng(25)
    n = 60
    X = rng.normal(size=(n, 2))
    labels = (X[:, 0] > 0).astype(int)
    parcel_ids = [f"P{i % 20}" for i in range(n)]  # 20 parcels, 3 rows each
    matrix = make_matrix(X, labels=labels, parcel_ids=parcel_ids)

    seen: list[set] = []

    def trainer(m):
        seen.append(set(m.parcel_ids))
        return _ScoreByFirstColumn()

    folds, seed = 5, 7
    clf = cross_fit_calibrated(matrix, trainer, folds=folds, seed=seed)
    assert isinstance(clf, CalibratedClassifier)
    assert len(seen) == folds + 1  # one per fold plus the final full refit

    # replay the fold assignment and check the holdout never leaks into training
    expected_folds = group_folds(parcel_ids, folds, np.random.default_rng(seed))
    all_parcels = set(parcel_ids)
    for held_out, train_parcels in zip(expected_folds, seen[:-1]):
        assert train_parcels == all_parcels - held_out
    assert seen[-1] == all_parcels

    p = clf.predict_proba(matrix)
    assert ((p > 0) & (p < 1)).all()
    assert rank_auc(p, labels) == rank_auc(X[:, 0], labels)


def test_cross_fit_requires_labels_and_usable_folds():
    unlabeled = make_matrix([[0.0], [1.0]])
    with pytest.raises(ValueError, match="labeled"):
        cross_fit_calibrated(unlabeled, lambda m: _ScoreByFirstColumn())

    # two single-class parcels: every fold complement is single-class, so no
    # out-of-fold scores exist and the final fit must refuse
    matrix = make_matrix(
        [[0.0], [0.1], [1.0], [1.1]],
        labels=[0, 0, 1, 1],
        parcel_ids=["A", "A", "B", "B"],
    )
    with pytest.raises(ValueError, match="both classes"):
        cross_fit_calibrated(matrix, lambda m: _ScoreByFirstColumn(), folds=2)


def test_cross_fit_calibrates_toward_observed_frequencies():
    rng = np.random.default_rng(26)
    n = 4000
    p_true = rng.uniform(0.05, 0.95, size=n)
    X = np.column_stack([logit(p_true), rng.normal(size=n)])
    labels = (rng.random(n) < p_true).astype(int)
    matrix = make_matrix(X, labels=labels, parcel_ids=[f"P{i}" for i in range(n)])
    clf = cross_fit_calibrated(matrix, lambda m: _ScoreByFirstColumn(), folds=5, seed=1)
    p_hat = clf.predict_proba(matrix)
    # reliability: mean absolute gap between predicted and empirical
    # frequency across deciles of the prediction
    bins = np.clip((p_hat * 10).astype(int), 0, 9)
    gaps = [
        abs(p_hat[bins == b].mean() - labels[bins == b].mean())
        for b in range(10)
        if (bins == b).sum() >= 50
    ]
    assert len(gaps) >= 6
    assert max(gaps) <= 0.05
