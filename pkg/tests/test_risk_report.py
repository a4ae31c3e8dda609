"""Ranked risk lists, tiers, hinge quartiles, and report writers."""

from __future__ import annotations

import csv
import json
import statistics

import numpy as np
import pytest

from aquarisk import (
    CalibratedClassifier,
    CalibrationMap,
    QuartileRow,
    RiskAssessment,
    assign_tiers,
    quartile_tables,
    quartiles_hinges,
    rank_untested,
)
from aquarisk.records import ParcelRecord
from aquarisk.risk_report import (
    TIER_HIGH_MIN,
    TIER_LOW_MAX,
    submission_counts_from_matches,
    write_quartiles_csv,
    write_ranked_csv,
    write_ranked_geojson,
)

from conftest import make_matrix


class _ByFirstColumn:
    """Deterministic stand-in model: probability equals the first feature."""

    def predict_proba(self, rows):
        return np.asarray(rows, dtype=float)[:, 0]

    raw_scores = predict_proba


def _matrix(probs, ids):
    return make_matrix(np.asarray(probs, dtype=float).reshape(-1, 1), parcel_ids=ids)


# ---------------------------------------------------------------------------
# ranking


def test_rank_top_one_is_the_argmax():
    matrix = _matrix([0.2, 0.9, 0.5], ["P1", "P2", "P3"])
    ranked = rank_untested(_ByFirstColumn(), matrix, tested_parcels=[], top_k=1)
    assert [a.parcel_id for a in ranked] == ["P2"]
    assert ranked[0].probability == 0.9
    assert ranked[0].tier is None


def test_rank_excludes_tested_parcels_and_sorts_descending():
    matrix = _matrix([0.2, 0.9, 0.5, 0.7], ["P1", "P2", "P3", "P4"])
    ranked = rank_untested(_ByFirstColumn(), matrix, tested_parcels={"P2"})
    assert [a.parcel_id for a in ranked] == ["P4", "P3", "P1"]


def test_rank_of_fully_tested_city_is_empty():
    matrix = _matrix([0.2, 0.9], ["P1", "P2"])
    assert rank_untested(_ByFirstColumn(), matrix, {"P1", "P2"}) == []


def test_rank_ties_break_to_the_smaller_parcel_id():
    matrix = _matrix([0.5, 0.5, 0.5], ["PC", "PA", "PB"])
    ranked = rank_untested(_ByFirstColumn(), matrix, [])
    assert [a.parcel_id for a in ranked] == ["PA", "PB", "PC"]


def test_rank_requires_a_positive_cutoff():
    matrix = _matrix([0.5], ["P1"])
    with pytest.raises(ValueError, match="top_k"):
        rank_untested(_ByFirstColumn(), matrix, [], top_k=0)


def test_calibration_never_reorders_the_ranking():
    rng = np.random.default_rng(70)
    probs = rng.uniform(-3, 3, size=40)
    ids = [f"P{i:02d}" for i in range(40)]
    matrix = _matrix(probs, ids)
    raw_order = [a.parcel_id for a in rank_untested(_ByFirstColumn(), matrix, [])]
    calibrated = CalibratedClassifier(
        base=_ByFirstColumn(), cal_map=CalibrationMap(a=-1.7, b=0.4)
    )
    cal_order = [a.parcel_id for a in rank_untested(calibrated, matrix, [])]
    assert cal_order == raw_order


# ---------------------------------------------------------------------------
# tiers


def test_tier_boundaries_are_inclusive_at_the_top():
    a = [
        RiskAssessment("P1", 0.5),
        RiskAssessment("P2", TIER_HIGH_MIN),
        RiskAssessment("P3", TIER_HIGH_MIN - 1e-12),
        RiskAssessment("P4", TIER_LOW_MAX),
        RiskAssessment("P5", TIER_LOW_MAX - 1e-12),
        RiskAssessment("P6", 0.0),
    ]
    tiers = [x.tier for x in assign_tiers(a)]
    assert tiers == ["high", "high", "medium", "medium", "low", "low"]


def test_tiers_partition_every_assessment():
    rng = np.random.default_rng(71)
    a = [RiskAssessment(f"P{i}", float(p)) for i, p in enumerate(rng.random(200))]
    out = assign_tiers(a, high_min=0.6, low_max=0.2)
    assert all(x.tier in {"high", "medium", "low"} for x in out)
    assert all((x.probability >= 0.6) == (x.tier == "high") for x in out)
    assert all((x.probability < 0.2) == (x.tier == "low") for x in out)


def test_tier_cutoffs_are_validated():
    a = [RiskAssessment("P1", 0.5)]
    with pytest.raises(ValueError, match="cutoffs"):
        assign_tiers(a, high_min=0.2, low_max=0.4)
    with pytest.raises(ValueError, match="cutoffs"):
        assign_tiers(a, high_min=1.2, low_max=0.1)


# ---------------------------------------------------------------------------
# hinge quartiles


def test_hinges_hand_cases():
    assert quartiles_hinges([1, 2, 3, 4]) == (1.5, 2.5, 3.5)
    assert quartiles_hinges([1, 2, 3, 4, 5]) == (2.0, 3.0, 4.0)  # median in both halves
    assert quartiles_hinges([7.0]) == (7.0, 7.0, 7.0)
    assert quartiles_hinges([3.0, 3.0, 3.0]) == (3.0, 3.0, 3.0)
    with pytest.raises(ValueError, match="empty"):
        quartiles_hinges([])


def test_hinges_match_an_independent_sort_oracle():
    rng = np.random.default_rng(72)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        vals = rng.integers(-50, 50, size=n).astype(float)
        v = sorted(vals)
        half = (n + 1) // 2
        expected = (
            statistics.median(v[:half]),
            statistics.median(v),
            statistics.median(v[n - half:]),
        )
        assert quartiles_hinges(vals) == expected


# ---------------------------------------------------------------------------
# quartile tables


def _parcel(pid, year=None, sev=None):
    return ParcelRecord(parcel_id=pid, address_raw=f"{pid} X St",
                        year_built=year, home_sev=sev)


def test_quartile_table_hand_layout():
    parcels = [
        _parcel("A", 1920, 10.0), _parcel("B", 1920, 20.0),  # never submitted
        _parcel("C", 1950, 30.0),                            # one submission
        _parcel("D", 1950, 40.0), _parcel("E", None, 0.0),   # frequent submitters
    ]
    counts = {"C": 1, "D": 2, "E": 5}
    rows = quartile_tables(parcels, counts, ["home_sev"], stratify_year=1940)
    assert len(rows) == 9  # 3 buckets x (combined + 2 strata)
    by_key = {(r.bucket, r.stratum): r for r in rows}

    combined_zero = by_key[("zero", None)]
    assert (combined_zero.n, combined_zero.q1, combined_zero.median,
            combined_zero.q3) == (2, 10.0, 15.0, 20.0)
    assert combined_zero.pct_nonzero == 1.0

    combined_two = by_key[("two_or_more", None)]
    assert (combined_two.n, combined_two.median, combined_two.pct_nonzero) == (2, 20.0, 0.5)

    assert by_key[("one", None)].median == 30.0
    assert by_key[("zero", "pre1940")].n == 2
    assert by_key[("zero", "from1940")].n == 0
    assert by_key[("zero", "from1940")].median is None
    # the missing-year parcel E is counted combined but in neither stratum
    assert by_key[("two_or_more", "pre1940")].n == 0
    assert by_key[("two_or_more", "from1940")].n == 1


def test_quartile_table_without_strata():
    parcels = [_parcel("A", sev=5.0), _parcel("B", sev=6.0)]
    rows = quartile_tables(parcels, {}, ["home_sev", "year_built"], stratify_year=None)
    assert len(rows) == 6
    assert {r.stratum for r in rows} == {None}
    assert all(isinstance(r, QuartileRow) for r in rows)


def test_quartile_table_rejects_empty_attribute_list():
    with pytest.raises(ValueError, match="attributes"):
        quartile_tables([_parcel("A")], {}, [])


def test_submitters_skew_toward_higher_value_homes(small_city):
    city, tests = small_city
    counts = submission_counts_from_matches(tests.sample_parcels)
    rows = quartile_tables(city.parcels, counts, ["home_sev"], stratify_year=None)
    by_bucket = {r.bucket: r for r in rows}
    assert by_bucket["zero"].n + by_bucket["one"].n + by_bucket["two_or_more"].n > 0
    # the generator makes submission propensity rise with home value
    assert by_bucket["two_or_more"].median > by_bucket["zero"].median


def test_submission_counts_from_matches():
    counts = submission_counts_from_matches(
        {"S1": "P1", "S2": "P1", "S3": "P2"}
    )
    assert counts == {"P1": 2, "P2": 1}


# ---------------------------------------------------------------------------
# writers


def test_ranked_csv_writer(tmp_path):
    ranked = assign_tiers([RiskAssessment("P1", 0.9), RiskAssessment("P2", 0.05)])
    coords = {"P1": (43.01, -83.69)}
    path = tmp_path / "ranked.csv"
    write_ranked_csv(ranked, coords, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["parcel_id", "probability", "tier", "lat", "lon"]
    assert rows[1] == ["P1", "0.9", "high", "43.01", "-83.69"]
    assert rows[2] == ["P2", "0.05", "low", "", ""]


def test_ranked_geojson_writer(tmp_path):
    ranked = assign_tiers([RiskAssessment("P1", 0.9), RiskAssessment("P2", 0.05)])
    coords = {"P1": (43.01, -83.69)}
    path = tmp_path / "ranked.geojson"
    write_ranked_geojson(ranked, coords, path)
    doc = json.loads(path.read_text())
    assert doc["type"] == "FeatureCollection"
    feats = doc["features"]
    assert feats[0]["geometry"] == {"type": "Point", "coordinates": [-83.69, 43.01]}
    assert feats[0]["properties"] == {"parcel_id": "P1", "probability": 0.9, "tier": "high"}
    assert feats[1]["geometry"] is None


def test_quartiles_csv_writer(tmp_path):
    rows = [
        QuartileRow("home_sev", "zero", None, 2, 10.0, 15.0, 20.0, 1.0),
        QuartileRow("home_sev", "one", "pre1940", 0, None, None, None, None),
    ]
    path = tmp_path / "quartiles.csv"
    write_quartiles_csv(rows, path)
    with open(path, newline="") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["attribute", "bucket", "stratum", "n", "q1", "median", "q3", "pct_nonzero"]
    assert got[1] == ["home_sev", "zero", "", "2", "10.0", "15.0", "20.0", "1.0"]
    assert got[2] == ["home_sev", "one", "pre1940", "0", "", "", "", ""]
