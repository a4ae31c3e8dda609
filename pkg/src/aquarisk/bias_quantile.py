"""Inverse-propensity weighting and bias-corrected monthly p90 lead series.

Voluntary test submissions over-represent parcels that are likely to submit;
weighting each sample by (sum of in-month propensities) / (own propensity)
re-balances the month toward the full population before taking quantiles.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ._jobs import run_jobs
from .records import LEAD_ACTION_PPB, WaterTestRecord

PROPENSITY_FLOOR = 1e-4


@dataclass
class WeightedSample:
    lead_ppb: int
    sample_date: dt.date
    parcel_id: Optional[str]  # None = unmatched
    weight: float

    @property
    def matched(self) -> bool:
        return self.parcel_id is not None


@dataclass
class MonthSummary:
    month: str  # YYYY-MM
    estimate_ppb: float
    bootstrap_sd: float
    n_samples: int
    total_weight: float
    weighted: bool
    source: str
    compliant: bool
    all_unmatched: bool = False  # weighting requested but no propensity usable
    sd_flagged: bool = False     # fewer than 2 samples, sd reported as 0


@dataclass
class MonthlySeries:
    months: list[MonthSummary] = field(default_factory=list)


def compute_weights(
    samples: Sequence[tuple[int, dt.date, Optional[str]]],
    propensities: dict[str, float],
    floor: float = PROPENSITY_FLOOR,
) -> tuple[list[WeightedSample], bool]:
    """Normalized inverse-propensity weights for one month of samples.

    Matched samples get raw weight (sum of matched propensities)/p_i, with
    propensities floored before inversion; unmatched samples (no parcel, or a
    parcel without a propensity) get the median raw matched weight. All
    weights are then normalized to total 1. Returns the samples plus a flag
    set when nothing was matched and uniform weights were used instead.
    """
    if not samples:
        raise ValueError("month has no samples")
    p_list: list[Optional[float]] = []
    for _, _, pid in samples:
        p = propensities.get(pid) if pid is not None else None
        p_list.append(max(float(p), floor) if p is not None else None)

    matched_p = [p for p in p_list if p is not None]
    if not matched_p:
        uniform = 1.0 / len(samples)
        out = [
            WeightedSample(lead, day, pid, uniform) for (lead, day, pid) in samples
        ]
        return out, True

    p_sum = sum(matched_p)
    raw = [p_sum / p if p is not None else None for p in p_list]
    median_raw = float(np.median([r for r in raw if r is not None]))
    raw_filled = [r if r is not None else median_raw for r in raw]
    total = sum(raw_filled)
    out = [
        WeightedSample(lead, day, pid, r / total)
        for (lead, day, pid), r in zip(samples, raw_filled)
    ]
    return out, False


def weighted_quantile(
    values: Sequence[float], weights: Sequence[float], q: float
) -> float:
    """Smallest value whose cumulative weight reaches q of the total.

    Left-continuous inverse CDF; ties in value pool their weights. Cumulative
    sums are compared with a relative 1e-9 slack so exact-rational cases
    (uniform 1/n weights) behave like the unweighted quantile.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.size == 0:
        raise ValueError("weighted_quantile of empty input")
    if not (0.0 < q < 1.0):
        raise ValueError("q must be in (0, 1)")
    if (w <= 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be positive and finite")
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    total = cum[-1]
    target = q * total - 1e-9 * max(1.0, abs(total))
    k = int(np.searchsorted(cum, target, side="left"))
    return float(v[order][min(k, v.size - 1)])


def unweighted_quantile(values: Sequence[float], q: float) -> float:
    """Left-continuous sample quantile, the uniform-weight special case."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("quantile of empty input")
    k = int(np.ceil(q * v.size - 1e-9)) - 1
    return float(v[max(k, 0)])


def bootstrap_quantile_sd(
    values: Sequence[float],
    weights: Sequence[float],
    q: float,
    n_boot: int = 1000,
    seed: Union[int, np.random.SeedSequence] = 0,
    threads: int = 1,
) -> tuple[float, bool]:
    """Bootstrap sd of the weighted quantile.

    Each replicate draws n samples with replacement with probability
    proportional to weight, then takes the unweighted q-quantile (the weights
    are consumed by the resampling). Returns (sd, flagged); flagged means
    n < 2 so the sd is reported as 0.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = v.size
    if n < 2:
        return 0.0, True
    prob = w / w.sum()
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(n_boot)

    def replicate(ss: np.random.SeedSequence):
        def job() -> float:
            rng = np.random.default_rng(ss)
            draw = rng.choice(n, size=n, replace=True, p=prob)
            return unweighted_quantile(v[draw], q)
        return job

    reps = run_jobs([replicate(ss) for ss in children], threads)
    return float(np.std(np.asarray(reps), ddof=1)), False


def month_key(day: dt.date) -> str:
    return f"{day.year:04d}-{day.month:02d}"


def monthly_p90_series(
    tests: Sequence[WaterTestRecord],
    propensities: dict[str, float],
    matches: Optional[dict[str, str]] = None,
    source: Optional[str] = None,
    weighting: bool = True,
    q: float = 0.9,
    n_boot: int = 1000,
    seed: int = 0,
    threads: int = 1,
    floor: float = PROPENSITY_FLOOR,
) -> MonthlySeries:
    """Per-calendar-month weighted q-quantile of lead with bootstrap spread.

    ``matches`` maps sample_id to parcel_id for joined tests; absent entries
    are treated as unmatched. A month's estimate is flagged compliant when it
    falls strictly below the action level.
    """
    matches = matches or {}
    chosen = [t for t in tests if source is None or t.source == source]
    by_month: dict[str, list[WaterTestRecord]] = {}
    for t in chosen:
        by_month.setdefault(month_key(t.sample_date), []).append(t)

    series = MonthlySeries()
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(by_month))
    for ss, month in zip(children, sorted(by_month)):
        group = by_month[month]
        samples = [(t.lead_ppb, t.sample_date, matches.get(t.sample_id)) for t in group]
        if weighting:
            weighted_samples, all_unmatched = compute_weights(samples, propensities, floor)
        else:
            uniform = 1.0 / len(samples)
            weighted_samples = [
                WeightedSample(lead, day, pid, uniform) for (lead, day, pid) in samples
            ]
            all_unmatched = False
        values = np.array([s.lead_ppb for s in weighted_samples], dtype=float)
        wts = np.array([s.weight for s in weighted_samples])
        estimate = weighted_quantile(values, wts, q)
        sd, sd_flagged = bootstrap_quantile_sd(values, wts, q, n_boot, ss, threads)
        series.months.append(
            MonthSummary(
                month=month,
                estimate_ppb=estimate,
                bootstrap_sd=sd,
                n_samples=len(group),
                total_weight=float(wts.sum()),
                weighted=weighting,
                source=source or "all",
                compliant=bool(estimate < LEAD_ACTION_PPB),
                all_unmatched=all_unmatched,
                sd_flagged=sd_flagged,
            )
        )
    return series
