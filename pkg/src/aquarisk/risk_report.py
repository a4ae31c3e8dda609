"""Ranked risk lists, tier assignment and descriptive quartile tables."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .records import FeatureMatrix, ParcelRecord

TIER_HIGH_MIN = 0.33
TIER_LOW_MAX = 0.15

DEFAULT_TOP_K = 1000


@dataclass
class RiskAssessment:
    parcel_id: str
    probability: float
    tier: str | None = None
    tested_before: bool = False


@dataclass
class QuartileRow:
    """Summary of one attribute within one submission-count bucket."""

    attribute: str
    bucket: str
    stratum: str | None
    n: int
    q1: float | None
    median: float | None
    q3: float | None
    pct_nonzero: float | None


def rank_untested(model, matrix: FeatureMatrix, tested_parcels: Iterable[str],
                  top_k: int = DEFAULT_TOP_K) -> list[RiskAssessment]:
    """Score every parcel the model has never seen a sample for, keep the top_k.

    Ties in probability break toward the smaller parcel_id so reruns agree.
    """
    if top_k <= 0:
        raise ValueError(f"top_k must be positive, got {top_k}")
    tested = set(tested_parcels)
    keep = [i for i, pid in enumerate(matrix.parcel_ids) if pid not in tested]
    if not keep:
        return []
    sub = matrix.subset(keep)
    probs = model.predict_proba(sub.values)
    order = sorted(range(len(keep)), key=lambda i: (-probs[i], sub.parcel_ids[i]))
    return [
        RiskAssessment(parcel_id=sub.parcel_ids[i], probability=float(probs[i]))
        for i in order[:top_k]
    ]


def assign_tiers(assessments: Sequence[RiskAssessment],
                 high_min: float = TIER_HIGH_MIN,
                 low_max: float = TIER_LOW_MAX) -> list[RiskAssessment]:
    """Attach high/medium/low labels in place: high at or above high_min,
    low strictly below low_max, medium between."""
    if not 0.0 <= low_max < high_min <= 1.0:
        raise ValueError(f"bad tier cutoffs: low_max={low_max}, high_min={high_min}")
    for a in assessments:
        if a.probability >= high_min:
            a.tier = "high"
        elif a.probability < low_max:
            a.tier = "low"
        else:
            a.tier = "medium"
    return list(assessments)


def _median(sorted_vals: Sequence[float]) -> float:
    n = len(sorted_vals)
    mid = n // 2
    if n % 2:
        return float(sorted_vals[mid])
    return (float(sorted_vals[mid - 1]) + float(sorted_vals[mid])) / 2.0


def quartiles_hinges(values: Iterable[float]) -> tuple[float, float, float]:
    """Median-of-halves quartiles, inclusive variant: for odd n the overall
    median belongs to both halves. Matches hinge-style box plot summaries."""
    v = sorted(float(x) for x in values)
    if not v:
        raise ValueError("quartiles of an empty sequence")
    half = (len(v) + 1) // 2
    return _median(v[:half]), _median(v), _median(v[len(v) - half:])


_BUCKETS = ("zero", "one", "two_or_more")


def _bucket_of(count: int) -> str:
    if count <= 0:
        return "zero"
    return "one" if count == 1 else "two_or_more"


def _summarize(attribute: str, bucket: str, stratum: str | None,
               values: list[float]) -> QuartileRow:
    if not values:
        return QuartileRow(attribute, bucket, stratum, 0, None, None, None, None)
    q1, med, q3 = quartiles_hinges(values)
    nonzero = sum(1 for v in values if v != 0.0) / len(values)
    return QuartileRow(attribute, bucket, stratum, len(values), q1, med, q3, nonzero)


def quartile_tables(parcels: Sequence[ParcelRecord],
                    submission_counts: Mapping[str, int],
                    attributes: Sequence[str],
                    stratify_year: int | None = 1940) -> list[QuartileRow]:
    """Quartiles of parcel attributes by submission-count bucket.

    Buckets are zero / one / two_or_more distinct submissions. When
    stratify_year is given, each bucket additionally gets rows split on
    year_built before/from that year (parcels missing year_built are left
    out of the strata rows but kept in the combined ones).
    """
    if not attributes:
        raise ValueError("no attributes requested")
    groups: dict[str, list[ParcelRecord]] = {b: [] for b in _BUCKETS}
    for p in parcels:
        groups[_bucket_of(int(submission_counts.get(p.parcel_id, 0)))].append(p)

    rows: list[QuartileRow] = []
    for attr in attributes:
        for bucket in _BUCKETS:
            members = groups[bucket]
            vals = [float(getattr(p, attr)) for p in members if getattr(p, attr) is not None]
            rows.append(_summarize(attr, bucket, None, vals))
            if stratify_year is None:
                continue
            for stratum, keep in (
                (f"pre{stratify_year}", lambda y: y < stratify_year),
                (f"from{stratify_year}", lambda y: y >= stratify_year),
            ):
                vals = [
                    float(getattr(p, attr))
                    for p in members
                    if p.year_built is not None and keep(p.year_built)
                    and getattr(p, attr) is not None
                ]
                rows.append(_summarize(attr, bucket, stratum, vals))
    return rows


def _fmt_opt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def write_quartiles_csv(rows: Sequence[QuartileRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["attribute", "bucket", "stratum", "n", "q1", "median", "q3", "pct_nonzero"])
        for r in rows:
            w.writerow([
                r.attribute, r.bucket, r.stratum or "", r.n,
                _fmt_opt(r.q1), _fmt_opt(r.median), _fmt_opt(r.q3), _fmt_opt(r.pct_nonzero),
            ])


def write_ranked_csv(assessments: Sequence[RiskAssessment],
                     coords: Mapping[str, tuple[float | None, float | None]],
                     path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["parcel_id", "probability", "tier", "lat", "lon"])
        for a in assessments:
            lat, lon = coords.get(a.parcel_id, (None, None))
            w.writerow([
                a.parcel_id, repr(float(a.probability)), a.tier or "",
                "" if lat is None else repr(float(lat)),
                "" if lon is None else repr(float(lon)),
            ])


def write_ranked_geojson(assessments: Sequence[RiskAssessment],
                         coords: Mapping[str, tuple[float | None, float | None]],
                         path: str | Path) -> None:
    """Point feature collection; parcels without coordinates get a null geometry."""
    features = []
    for a in assessments:
        lat, lon = coords.get(a.parcel_id, (None, None))
        geometry = None
        if lat is not None and lon is not None:
            geometry = {"type": "Point", "coordinates": [float(lon), float(lat)]}
        features.append({
            "type": "Feature",
            "geometry": geometry,
            "properties": {
                "parcel_id": a.parcel_id,
                "probability": float(a.probability),
                "tier": a.tier,
            },
        })
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(
        json.dumps(doc, separators=(",", ":"), allow_nan=False) + "\n",
        encoding="utf-8",
    )


def submission_counts_from_matches(matches: Mapping[str, str]) -> dict[str, int]:
    """Collapse a sample_id -> parcel_id map into per-parcel sample counts."""
    counts: dict[str, int] = {}
    for pid in matches.values():
        counts[pid] = counts.get(pid, 0) + 1
    return counts
