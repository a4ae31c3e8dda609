"""Metrics, parcel-grouped cross-validation, learning curves, and grid search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .adaboost import AdaBoostConfig, train_adaboost
from .gbt import GBTConfig, train_gbt
from .records import FeatureMatrix


@dataclass
class RocCurve:
    thresholds: list[float]
    tpr: list[float]
    fpr: list[float]
    auc: float


@dataclass
class CvReport:
    metric: str
    values: list[float]
    mean: float
    sd: float
    n_runs: int
    folds: int
    seed: int


@dataclass
class LearningCurveReport:
    fractions: list[float]
    train_mean: list[Optional[float]]
    train_sd: list[Optional[float]]
    val_mean: list[Optional[float]]
    val_sd: list[Optional[float]]


# ---------------------------------------------------------------------------
# metrics

def rank_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """AUC via the rank statistic with midrank tie handling."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("rank_auc requires both classes present")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    # midranks: tied scores share the average of their 1-based positions
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(ranks[y == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """ROC curve over descending score thresholds; AUC from the rank statistic.

    The trapezoidal area under the returned points equals the rank AUC
    (ties produce diagonal segments whose area the midrank statistic matches).
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc requires both classes present")
    order = np.argsort(-s, kind="stable")
    s_desc = s[order]
    y_desc = y[order]
    thresholds = [float("inf")]
    tpr = [0.0]
    fpr = [0.0]
    tp = fp = 0
    i = 0
    while i < len(s_desc):
        j = i
        while j + 1 < len(s_desc) and s_desc[j + 1] == s_desc[i]:
            j += 1
        block = y_desc[i : j + 1]
        tp += int((block == 1).sum())
        fp += int((block == 0).sum())
        thresholds.append(float(s_desc[i]))
        tpr.append(tp / n_pos)
        fpr.append(fp / n_neg)
        i = j + 1
    return RocCurve(thresholds=thresholds, tpr=tpr, fpr=fpr, auc=rank_auc(s, y))


def recall_at_threshold(
    scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5
) -> float:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pos = y == 1
    if not pos.any():
        raise ValueError("recall undefined without positives")
    return float((s[pos] >= threshold).sum() / pos.sum())


def accuracy(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> float:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    return float(((s >= threshold).astype(int) == y).mean())


def mse(scores: Sequence[float], labels: Sequence[int]) -> float:
    # kept in the registry for score-vs-target diagnostics; no model wires it
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    return float(np.mean((s - y) ** 2))


METRICS: dict[str, Callable] = {
    "auc": rank_auc,
    "recall": recall_at_threshold,
    "accuracy": accuracy,
    "mse": mse,
}

MODEL_KINDS = {
    "gbt": (GBTConfig, train_gbt),
    "adaboost": (AdaBoostConfig, train_adaboost),
}


# ---------------------------------------------------------------------------
# parcel-grouped folds

def distinct_parcels(parcel_ids: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for pid in parcel_ids:
        if pid not in seen:
            seen.add(pid)
            out.append(pid)
    return out


def group_folds(parcel_ids: Sequence[str], folds: int, rng: np.random.Generator) -> list[set[str]]:
    """Partition distinct parcels into near-equal shuffled folds."""
    parcels = distinct_parcels(parcel_ids)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > len(parcels):
        raise ValueError(f"{folds} folds exceed {len(parcels)} distinct parcels")
    shuffled = [parcels[i] for i in rng.permutation(len(parcels))]
    return [set(chunk) for chunk in np.array_split(np.array(shuffled, dtype=object), folds)]


def _rows_for(matrix: FeatureMatrix, parcels: set[str]) -> np.ndarray:
    return np.array([i for i, pid in enumerate(matrix.parcel_ids) if pid in parcels], dtype=int)


# ---------------------------------------------------------------------------
# cross-validation

def cross_validate(
    matrix: FeatureMatrix,
    model_kind: str,
    config,
    folds: int = 5,
    n_runs: int = 1,
    seed: int = 0,
    metric: str = "auc",
) -> CvReport:
    """Repeated parcel-grouped k-fold evaluation.

    Every run reshuffles parcels into ``folds`` disjoint folds; the run's
    value is the mean of its per-fold metric. Folds whose held-out rows are
    single-class (metric undefined) are skipped within the run.
    """
    if matrix.labels is None:
        raise ValueError("cross_validate requires a labeled matrix")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    _, trainer = MODEL_KINDS[model_kind]
    metric_fn = METRICS[metric]

    values: list[float] = []
    for run in range(n_runs):
        rng = np.random.default_rng([seed, run])
        fold_sets = group_folds(matrix.parcel_ids, folds, rng)
        fold_scores: list[float] = []
        for held_out in fold_sets:
            test_idx = _rows_for(matrix, held_out)
            train_idx = np.setdiff1d(np.arange(matrix.n_rows), test_idx)
            train = matrix.subset(train_idx)
            test = matrix.subset(test_idx)
            if len(np.unique(train.labels)) < 2 or len(np.unique(test.labels)) < 2:
                continue
            model = trainer(train, config)
            fold_scores.append(metric_fn(model.predict_proba(test), test.labels))
        if not fold_scores:
            raise ValueError("no fold produced a defined metric value")
        values.append(float(np.mean(fold_scores)))
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return CvReport(
        metric=metric, values=values, mean=mean, sd=sd,
        n_runs=n_runs, folds=folds, seed=seed,
    )


def learning_curve(
    matrix: FeatureMatrix,
    config: GBTConfig,
    fractions: Sequence[float] = tuple(np.round(np.arange(0.1, 1.01, 0.1), 2)),
    folds: int = 5,
    seed: int = 0,
) -> LearningCurveReport:
    """Train-set-size sweep with parcel-grouped validation folds.

    A cell where the subsampled training rows collapse to one class is
    reported absent (None) rather than raising.
    """
    fr = [float(f) for f in fractions]
    if any(not (0.0 < f <= 1.0) for f in fr) or any(b <= a for a, b in zip(fr, fr[1:])):
        raise ValueError("fractions must be strictly increasing within (0, 1]")
    if matrix.labels is None:
        raise ValueError("learning_curve requires a labeled matrix")

    rng = np.random.default_rng(seed)
    fold_sets = group_folds(matrix.parcel_ids, folds, rng)
    train_cells: list[list[Optional[float]]] = [[] for _ in fr]
    val_cells: list[list[Optional[float]]] = [[] for _ in fr]
    for held_out in fold_sets:
        test_idx = _rows_for(matrix, held_out)
        test = matrix.subset(test_idx)
        pool = [pid for pid in distinct_parcels(matrix.parcel_ids) if pid not in held_out]
        pool = [pool[i] for i in rng.permutation(len(pool))]
        for fi, f in enumerate(fr):
            take = set(pool[: max(1, int(np.ceil(f * len(pool))))])
            train = matrix.subset(_rows_for(matrix, take))
            if (
                len(np.unique(train.labels)) < 2
                or len(np.unique(test.labels)) < 2
            ):
                train_cells[fi].append(None)
                val_cells[fi].append(None)
                continue
            model = train_gbt(train, config)
            train_cells[fi].append(rank_auc(model.predict_proba(train), train.labels))
            val_cells[fi].append(rank_auc(model.predict_proba(test), test.labels))

    def summarize(cells: list[list[Optional[float]]]):
        means, sds = [], []
        for col in cells:
            present = [v for v in col if v is not None]
            if not present:
                means.append(None)
                sds.append(None)
            else:
                means.append(float(np.mean(present)))
                sds.append(float(np.std(present, ddof=1)) if len(present) > 1 else 0.0)
        return means, sds

    train_mean, train_sd = summarize(train_cells)
    val_mean, val_sd = summarize(val_cells)
    return LearningCurveReport(
        fractions=fr, train_mean=train_mean, train_sd=train_sd,
        val_mean=val_mean, val_sd=val_sd,
    )


def grid_search(
    matrix: FeatureMatrix,
    model_kind: str,
    grid: dict[str, Sequence],
    folds: int = 5,
    seed: int = 0,
    metric: str = "auc",
) -> tuple[dict, list[tuple[dict, CvReport]]]:
    """Exhaustive Cartesian sweep; ties go to the lexicographically smallest point."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must be a nonempty mapping of nonempty value lists")
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    config_cls, _ = MODEL_KINDS[model_kind]
    names = sorted(grid)
    table: list[tuple[dict, CvReport]] = []
    best: Optional[tuple] = None  # (-mean, lexicographic values, point dict)
    for combo in itertools.product(*(grid[n] for n in names)):
        point = dict(zip(names, combo))
        config = config_cls(**point)
        report = cross_validate(
            matrix, model_kind, config, folds=folds, n_runs=1, seed=seed, metric=metric
        )
        table.append((point, report))
        key = (-report.mean, combo)
        if best is None or key < best[0]:
            best = (key, point)
    assert best is not None
    return best[1], table
