"""Sigmoid score calibration fit by Newton descent on smoothed log-loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .evaluate import group_folds, _rows_for
from .records import FeatureMatrix

_GRAD_TOL = 1e-10
_MAX_ITER = 100


@dataclass
class CalibrationMap:
    a: float
    b: float
    fit_folds: int = 0
    kind: str = "sigmoid"

    def __post_init__(self) -> None:
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("calibration parameters must be finite")


@dataclass
class CalibratedClassifier:
    base: object  # any model exposing raw_scores(rows)
    cal_map: CalibrationMap

    def raw_scores(self, rows) -> np.ndarray:
        return self.base.raw_scores(rows)

    def predict_proba(self, rows) -> np.ndarray:
        return apply_calibration(self.cal_map, self.base.raw_scores(rows))


def _sigmoid_of_neg(z: np.ndarray) -> np.ndarray:
    """1 / (1 + exp(z)) without overflow at either tail."""
    zc = np.clip(z, -700.0, 700.0)
    return np.where(zc >= 0, np.exp(-zc) / (1.0 + np.exp(-zc)), 1.0 / (1.0 + np.exp(zc)))


def apply_calibration(cal_map: CalibrationMap, scores) -> Union[float, np.ndarray]:
    """p = 1 / (1 + exp(A*s + B)); strictly monotone in s whenever A != 0."""
    s = np.asarray(scores, dtype=float)
    out = _sigmoid_of_neg(cal_map.a * s + cal_map.b)
    return float(out) if out.ndim == 0 else out


def _smoothed_targets(labels: np.ndarray) -> np.ndarray:
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    return np.where(labels == 1, hi, lo)


def fit_calibration(
    scores: Sequence[float], labels: Sequence[int], folds: int = 0
) -> CalibrationMap:
    """Fit the sigmoid map on (score, label) pairs.

    Scores are the base model's raw decision values (log-odds scale for the
    boosted-tree model, vote fraction for the adaptive-boosting model); the
    out-of-fold protocol that produces them lives in ``cross_fit_calibrated``.
    Targets use the usual smoothing priors so the optimum stays interior.

    With p = sigmoid(-(a*s+b)) the per-sample loss -t*ln(p) - (1-t)*ln(1-p)
    reduces to ln(1+exp(z)) - (1-t)*z at z = a*s+b, whose z-gradient is t - p;
    Newton steps use the exact 2x2 Hessian with backtracking halving.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.ndim != 1 or len(s) != len(y):
        raise ValueError("scores and labels must be aligned 1-d sequences")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    if len(np.unique(y)) < 2:
        raise ValueError("calibration requires both classes present")

    t = _smoothed_targets(y)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    a = 0.0
    b = float(np.log((n_neg + 1.0) / (n_pos + 1.0)))

    def loss_at(a_: float, b_: float) -> float:
        z = a_ * s + b_
        return float(np.sum(np.logaddexp(0.0, z) - (1.0 - t) * z))

    current = loss_at(a, b)
    for _ in range(_MAX_ITER):
        p = _sigmoid_of_neg(a * s + b)
        resid = t - p  # dF/dz per sample
        grad = np.array([np.dot(resid, s), resid.sum()])
        if np.linalg.norm(grad) <= _GRAD_TOL:
            break
        w = p * (1.0 - p)
        hess = np.array([
            [float(np.dot(w, s * s)), float(np.dot(w, s))],
            [float(np.dot(w, s)), float(w.sum())],
        ]) + 1e-12 * np.eye(2)
        step = np.linalg.solve(hess, grad)
        scale = 1.0
        improved = False
        for _ in range(50):
            cand = loss_at(a - scale * step[0], b - scale * step[1])
            if cand < current:
                a -= scale * step[0]
                b -= scale * step[1]
                current = cand
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
    return CalibrationMap(a=float(a), b=float(b), fit_folds=folds)


def cross_fit_calibrated(
    matrix: FeatureMatrix,
    trainer: Callable[[FeatureMatrix], object],
    folds: int = 5,
    seed: int = 0,
) -> CalibratedClassifier:
    """Out-of-fold calibration with parcel-grouped folds.

    The base model is refit once per fold to score its held-out rows; the
    sigmoid is fit on the pooled out-of-fold scores, then wrapped around a
    final refit on all rows.
    """
    if matrix.labels is None:
        raise ValueError("calibration requires a labeled matrix")
    rng = np.random.default_rng(seed)
    fold_sets = group_folds(matrix.parcel_ids, folds, rng)
    oof_scores = np.full(matrix.n_rows, np.nan)
    for held_out in fold_sets:
        test_idx = _rows_for(matrix, held_out)
        train_idx = np.setdiff1d(np.arange(matrix.n_rows), test_idx)
        train = matrix.subset(train_idx)
        if len(np.unique(train.labels)) < 2:
            continue
        model = trainer(train)
        oof_scores[test_idx] = model.raw_scores(matrix.subset(test_idx))
    have = ~np.isnan(oof_scores)
    cal_map = fit_calibration(oof_scores[have], np.asarray(matrix.labels)[have], folds=folds)
    return CalibratedClassifier(base=trainer(matrix), cal_map=cal_map)
