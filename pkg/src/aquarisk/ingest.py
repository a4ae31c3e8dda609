"""CSV ingestion, address normalization, merging, encoding, and group splits."""

from __future__ import annotations

import csv
import datetime as dt
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .records import (
    CONFIDENCE_VOCAB,
    LEAD_ACTION_PPB,
    MATERIAL_VOCAB,
    OCCUPIED_CONDITIONS,
    SAMPLE_WINDOW,
    SOURCE_VOCAB,
    YEAR_BUILT_RANGE,
    CensusBlockRecord,
    FeatureMatrix,
    ParcelRecord,
    ServiceLineRecord,
    SplitAssignment,
    WaterTestRecord,
)

PARCEL_COLUMNS = [
    "parcel_id", "address", "year_built", "land_value", "building_value",
    "home_sev", "land_improvements", "parcel_acres", "latitude", "longitude",
    "census_tract", "block_group", "block", "usps_active", "housing_condition",
    "property_class",
]
TEST_COLUMNS = ["sample_id", "address", "sample_date", "lead_ppb", "copper_ppb", "source"]
SERVICE_LINE_COLUMNS = ["parcel_id", "public_material", "private_material", "confidence"]

_TRUE_TOKENS = {"true", "1", "yes", "t", "y"}
_FALSE_TOKENS = {"false", "0", "no", "f", "n"}


@dataclass
class DiscardedRow:
    row_number: int  # physical line in the file, header is line 1
    reason: str


@dataclass
class ParseResult:
    records: list
    discarded: list[DiscardedRow] = field(default_factory=list)

    @property
    def n_discarded(self) -> int:
        return len(self.discarded)


def _opt(text: str, parser: Callable):
    return None if text == "" else parser(text)


def _as_int(text: str) -> int:
    # reject floats masquerading as ints ("7.0" is not an integer reading)
    return int(text)


def _as_nonneg_float(text: str) -> float:
    v = float(text)
    if not np.isfinite(v) or v < 0:
        raise ValueError(f"negative or non-finite: {text}")
    return v


def _as_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE_TOKENS:
        return True
    if low in _FALSE_TOKENS:
        return False
    raise ValueError(f"not a boolean: {text}")


def _parse_parcel(row: dict) -> ParcelRecord:
    if not row["parcel_id"]:
        raise ValueError("empty parcel_id")
    year = _opt(row["year_built"], _as_int)
    if year is not None and not (YEAR_BUILT_RANGE[0] <= year <= YEAR_BUILT_RANGE[1]):
        raise ValueError(f"year_built out of range: {year}")
    return ParcelRecord(
        parcel_id=row["parcel_id"],
        address_raw=row["address"],
        year_built=year,
        land_value=_opt(row["land_value"], _as_nonneg_float),
        building_value=_opt(row["building_value"], _as_nonneg_float),
        home_sev=_opt(row["home_sev"], _as_nonneg_float),
        land_improvements_value=_opt(row["land_improvements"], _as_nonneg_float),
        parcel_acres=_opt(row["parcel_acres"], _as_nonneg_float),
        latitude=_opt(row["latitude"], float),
        longitude=_opt(row["longitude"], float),
        census_tract=row["census_tract"] or None,
        block_group=row["block_group"] or None,
        block=row["block"] or None,
        usps_active=_opt(row["usps_active"], _as_bool),
        housing_condition_2014=row["housing_condition"] or None,
        property_class=row["property_class"] or None,
    )


def _parse_test(row: dict) -> WaterTestRecord:
    if not row["sample_id"]:
        raise ValueError("empty sample_id")
    day = dt.date.fromisoformat(row["sample_date"])
    if not (SAMPLE_WINDOW[0] <= day <= SAMPLE_WINDOW[1]):
        raise ValueError(f"sample_date outside window: {day.isoformat()}")
    lead = _as_int(row["lead_ppb"])
    if lead < 0:
        raise ValueError(f"negative lead_ppb: {lead}")
    copper = _opt(row["copper_ppb"], _as_int)
    if copper is not None and copper < 0:
        raise ValueError(f"negative copper_ppb: {copper}")
    source = row["source"]
    if source not in SOURCE_VOCAB:
        raise ValueError(f"unknown source: {source!r}")
    return WaterTestRecord(
        sample_id=row["sample_id"],
        address_raw=row["address"],
        sample_date=day,
        lead_ppb=lead,
        copper_ppb=copper,
        source=source,
    )


def _parse_census(row: dict) -> CensusBlockRecord:
    if not row["block_group_id"]:
        raise ValueError("empty block_group_id")
    aggregates = {}
    for name, text in row.items():
        if name == "block_group_id":
            continue
        aggregates[name] = _opt(text, _as_nonneg_float)
    return CensusBlockRecord(block_group_id=row["block_group_id"], aggregates=aggregates)


def _parse_service_line(row: dict) -> ServiceLineRecord:
    if not row["parcel_id"]:
        raise ValueError("empty parcel_id")
    pub = row["public_material"] or "unknown"
    priv = row["private_material"] or "unknown"
    conf = row["confidence"] or "unknown"
    if pub not in MATERIAL_VOCAB or priv not in MATERIAL_VOCAB:
        raise ValueError(f"material outside vocabulary: {pub!r}/{priv!r}")
    if conf not in CONFIDENCE_VOCAB:
        raise ValueError(f"confidence outside vocabulary: {conf!r}")
    return ServiceLineRecord(
        parcel_id=row["parcel_id"],
        public_material=pub,
        private_material=priv,
        record_confidence=conf,
    )


_KINDS = {
    "parcels": (PARCEL_COLUMNS, _parse_parcel, "parcel_id"),
    "tests": (TEST_COLUMNS, _parse_test, "sample_id"),
    "census": (["block_group_id"], _parse_census, "block_group_id"),
    "service_lines": (SERVICE_LINE_COLUMNS, _parse_service_line, "parcel_id"),
}


def parse_dataset(path: str | Path, kind: str) -> ParseResult:
    """Parse one source CSV into typed records.

    Rows failing a type or range check are discarded and reported with their
    physical line number; the parse aborts only when the file is missing, a
    mandatory column is absent, or more than half the data rows are malformed.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown dataset kind: {kind!r}")
    mandatory, row_parser, key_field = _KINDS[kind]
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{kind} file not found: {path}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in mandatory if c not in header]
        if missing:
            raise ValueError(f"{kind} file missing mandatory columns: {missing}")

        records, discarded, seen_keys = [], [], set()
        n_rows = 0
        for line_no, row in enumerate(reader, start=2):
            n_rows += 1
            try:
                rec = row_parser({k: (v or "").strip() for k, v in row.items() if k is not None})
                key = getattr(rec, key_field, None) or rec.block_group_id  # type: ignore[union-attr]
            except (ValueError, KeyError, TypeError) as exc:
                discarded.append(DiscardedRow(line_no, str(exc)))
                continue
            if kind != "service_lines" and key in seen_keys:
                discarded.append(DiscardedRow(line_no, f"duplicate {key_field}: {key}"))
                continue
            seen_keys.add(key)
            records.append(rec)

    if n_rows and len(discarded) > 0.5 * n_rows:
        raise ValueError(
            f"{kind}: {len(discarded)} of {n_rows} rows malformed (>50%), aborting; "
            f"first: line {discarded[0].row_number}: {discarded[0].reason}"
        )
    return ParseResult(records=records, discarded=discarded)


# ---------------------------------------------------------------------------
# address normalization

_SUFFIX_MAP = {
    "STREET": "ST", "STR": "ST",
    "AVENUE": "AVE", "AV": "AVE",
    "ROAD": "RD",
    "DRIVE": "DR", "DRV": "DR",
    "BOULEVARD": "BLVD", "BOUL": "BLVD",
    "LANE": "LN",
    "COURT": "CT",
    "PLACE": "PL",
    "CIRCLE": "CIR",
    "HIGHWAY": "HWY",
    "PARKWAY": "PKWY",
    "TERRACE": "TER",
    "TRAIL": "TRL",
    "SQUARE": "SQ",
    "CRESCENT": "CRES",
}
_DIRECTION_MAP = {
    "NORTH": "N", "SOUTH": "S", "EAST": "E", "WEST": "W",
    "NORTHEAST": "NE", "NORTHWEST": "NW", "SOUTHEAST": "SE", "SOUTHWEST": "SW",
}
# a unit designator and the token after it are both dropped
_UNIT_WORDS = {
    "APT", "APARTMENT", "UNIT", "SUITE", "STE", "LOT", "BLDG", "BUILDING",
    "FLOOR", "FL", "RM", "ROOM", "TRLR",
}
_HASH_UNIT_RE = re.compile(r"#\S*")
_NON_ALNUM_RE = re.compile(r"[^A-Z0-9 ]+")


def normalize_address(raw: str) -> str:
    """Deterministic rule-based canonical form of a street address.

    Uppercases, strips punctuation, collapses whitespace, maps directionals
    and street suffixes to canonical abbreviations, and removes unit
    designators ("APT 4", "#2B"). Idempotent by construction: every output
    token is a fixed point of the rules.
    """
    text = _HASH_UNIT_RE.sub(" ", raw.upper())
    text = _NON_ALNUM_RE.sub(" ", text)
    out: list[str] = []
    skip_next = False
    for token in text.split():
        if skip_next:
            skip_next = False
            continue
        if token in _UNIT_WORDS:
            skip_next = True
            continue
        token = _DIRECTION_MAP.get(token, token)
        token = _SUFFIX_MAP.get(token, token)
        out.append(token)
    return " ".join(out)


# ---------------------------------------------------------------------------
# merge

# reason codes for unmatched.csv
REASON_NO_MATCH = "no_parcel_match"
REASON_AMBIGUOUS = "ambiguous_address"

PARCEL_NUMERIC = [
    "year_built", "land_value", "building_value", "home_sev",
    "land_improvements_value", "parcel_acres", "latitude", "longitude",
    "usps_active",
]
PARCEL_CATEGORICAL = ["housing_condition_2014", "property_class"]
LINE_CATEGORICAL = ["public_material", "private_material", "line_confidence"]


@dataclass
class FeatureSchema:
    """Ordered column list with the subset that is categorical."""

    columns: list[str]
    categorical: list[str]

    def __post_init__(self) -> None:
        unknown = set(self.categorical) - set(self.columns)
        if unknown:
            raise ValueError(f"categorical columns not in schema: {sorted(unknown)}")


@dataclass
class UnmatchedTest:
    sample_id: str
    address_raw: str
    reason: str


@dataclass
class MergeResult:
    labeled: FeatureMatrix
    prediction: FeatureMatrix
    schema: FeatureSchema
    unmatched: list[UnmatchedTest]
    matches: dict[str, str]  # sample_id -> parcel_id
    test_counts: dict[str, int]  # parcel_id -> matched test count (all parcels)


def _parcel_feature_row(
    parcel: ParcelRecord,
    line: Optional[ServiceLineRecord],
    census: Optional[CensusBlockRecord],
    census_names: list[str],
) -> list:
    usps = None if parcel.usps_active is None else float(parcel.usps_active)
    row = [
        parcel.year_built, parcel.land_value, parcel.building_value,
        parcel.home_sev, parcel.land_improvements_value, parcel.parcel_acres,
        parcel.latitude, parcel.longitude, usps,
        parcel.housing_condition_2014, parcel.property_class,
        line.public_material if line else None,
        line.private_material if line else None,
        line.record_confidence if line else None,
    ]
    if census is not None:
        row.extend(census.aggregates.get(name) for name in census_names)
    else:
        row.extend(None for _ in census_names)
    return row


def merge_datasets(
    parcels: Sequence[ParcelRecord],
    tests: Sequence[WaterTestRecord],
    census: Sequence[CensusBlockRecord],
    lines: Sequence[ServiceLineRecord],
) -> MergeResult:
    """Join tests to parcels by normalized address; attach census and line data.

    Produces a labeled matrix (one row per matched test) and a prediction
    matrix (one row per parcel). Tests whose normalized address matches no
    parcel, or matches more than one, are routed to the unmatched list;
    ambiguity is never silently resolved.
    """
    addr_to_parcels: dict[str, list[str]] = {}
    for p in parcels:
        addr_to_parcels.setdefault(normalize_address(p.address_raw), []).append(p.parcel_id)

    census_by_bg = {c.block_group_id: c for c in census}
    line_by_parcel: dict[str, ServiceLineRecord] = {}
    for ln in lines:
        line_by_parcel.setdefault(ln.parcel_id, ln)

    census_names = list(census[0].aggregates.keys()) if census else []
    columns = PARCEL_NUMERIC + PARCEL_CATEGORICAL + LINE_CATEGORICAL + census_names
    if len(set(columns)) != len(columns):
        raise ValueError("census aggregate names collide with parcel feature names")
    schema = FeatureSchema(columns=columns, categorical=PARCEL_CATEGORICAL + LINE_CATEGORICAL)

    parcel_by_id = {p.parcel_id: p for p in parcels}
    parcel_rows = {
        p.parcel_id: _parcel_feature_row(
            p, line_by_parcel.get(p.parcel_id),
            census_by_bg.get(p.block_group) if p.block_group else None,
            census_names,
        )
        for p in parcels
    }

    matches: dict[str, str] = {}
    unmatched: list[UnmatchedTest] = []
    test_counts = {p.parcel_id: 0 for p in parcels}
    lab_rows, lab_ids, lab_labels, lab_dates, lab_sids, lab_sources = [], [], [], [], [], []
    for t in tests:
        owners = addr_to_parcels.get(normalize_address(t.address_raw), [])
        if not owners:
            unmatched.append(UnmatchedTest(t.sample_id, t.address_raw, REASON_NO_MATCH))
            continue
        if len(owners) > 1:
            unmatched.append(UnmatchedTest(t.sample_id, t.address_raw, REASON_AMBIGUOUS))
            continue
        pid = owners[0]
        matches[t.sample_id] = pid
        test_counts[pid] += 1
        lab_rows.append(parcel_rows[pid])
        lab_ids.append(pid)
        lab_labels.append(int(t.lead_ppb > LEAD_ACTION_PPB))
        lab_dates.append(t.sample_date)
        lab_sids.append(t.sample_id)
        lab_sources.append(t.source)

    labeled = FeatureMatrix(
        feature_names=list(columns),
        values=np.array(lab_rows, dtype=object).reshape(len(lab_rows), len(columns)),
        parcel_ids=lab_ids,
        labels=np.array(lab_labels, dtype=np.int8),
        sample_dates=lab_dates,
        sample_ids=lab_sids,
        sources=lab_sources,
    )
    pred_ids = [p.parcel_id for p in parcels]
    prediction = FeatureMatrix(
        feature_names=list(columns),
        values=np.array([parcel_rows[pid] for pid in pred_ids], dtype=object).reshape(
            len(pred_ids), len(columns)
        ),
        parcel_ids=pred_ids,
    )
    assert len(matches) + len(unmatched) == len(tests)
    return MergeResult(
        labeled=labeled,
        prediction=prediction,
        schema=schema,
        unmatched=unmatched,
        matches=matches,
        test_counts=test_counts,
    )


def encode_features(
    matrix: FeatureMatrix,
    schema: FeatureSchema,
    encoding_map: Optional[dict] = None,
) -> FeatureMatrix:
    """One-hot encode categorical columns; pass numerics through with NaN for missing.

    Categories are discovered from the input and ordered lexicographically,
    unless an encoding_map from a previous fit is supplied, in which case it
    is replayed verbatim (unseen categories encode to all-zero indicators).
    """
    if list(matrix.feature_names) != list(schema.columns):
        raise ValueError("matrix columns do not match schema")
    cat_set = set(schema.categorical)

    if encoding_map is None:
        categories: dict[str, list[str]] = {}
        for j, col in enumerate(schema.columns):
            if col in cat_set:
                seen = {v for v in matrix.values[:, j] if v is not None}
                categories[col] = sorted(seen)
        encoding_map = {"columns": list(schema.columns), "categories": categories}
    else:
        if list(encoding_map["columns"]) != list(schema.columns):
            raise ValueError("encoding_map was built for a different schema")
        categories = encoding_map["categories"]

    out_names: list[str] = []
    blocks: list[np.ndarray] = []
    n = matrix.n_rows
    for j, col in enumerate(schema.columns):
        raw = matrix.values[:, j]
        if col in cat_set:
            cats = categories.get(col, [])
            block = np.zeros((n, len(cats)))
            for k, cat in enumerate(cats):
                block[:, k] = [1.0 if v == cat else 0.0 for v in raw]
            out_names.extend(f"{col}={cat}" for cat in cats)
            blocks.append(block)
        else:
            colv = np.array([np.nan if v is None else float(v) for v in raw])
            out_names.append(col)
            blocks.append(colv.reshape(n, 1))

    values = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return FeatureMatrix(
        feature_names=out_names,
        values=values,
        parcel_ids=list(matrix.parcel_ids),
        labels=None if matrix.labels is None else matrix.labels.copy(),
        sample_dates=list(matrix.sample_dates) if matrix.sample_dates else None,
        sample_ids=list(matrix.sample_ids) if matrix.sample_ids else None,
        sources=list(matrix.sources) if matrix.sources else None,
        encoding_map=encoding_map,
    )


def group_split(matrix: FeatureMatrix, test_fraction: float, seed: int) -> SplitAssignment:
    """Assign whole parcels to train or test so no parcel straddles the split."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must be in (0, 1)")
    order: list[str] = []
    seen = set()
    for pid in matrix.parcel_ids:
        if pid not in seen:
            seen.add(pid)
            order.append(pid)
    if len(order) < 2:
        raise ValueError("need at least 2 distinct parcels to split")

    counts: dict[str, int] = {}
    for pid in matrix.parcel_ids:
        counts[pid] = counts.get(pid, 0) + 1

    rng = np.random.default_rng(seed)
    shuffled = [order[i] for i in rng.permutation(len(order))]
    target = test_fraction * matrix.n_rows
    test: set[str] = set()
    got = 0
    for pid in shuffled:
        k = counts[pid]
        # take the parcel while it moves the test-row count closer to target
        if abs(got + k - target) <= abs(got - target) and got < target:
            test.add(pid)
            got += k
    train = set(order) - test
    realized = got / matrix.n_rows
    if abs(realized - test_fraction) > 0.03 and len(order) >= 50:
        raise RuntimeError(
            f"group split realized fraction {realized:.3f} misses target {test_fraction:.3f}"
        )
    return SplitAssignment(train_parcels=train, test_parcels=test, seed=seed)


def filter_occupied(parcels: Sequence[ParcelRecord]) -> list[ParcelRecord]:
    """Keep parcels with an active postal account or an occupancy-grade survey condition."""
    return [
        p for p in parcels
        if p.usps_active is True or p.housing_condition_2014 in OCCUPIED_CONDITIONS
    ]


def build_submission_matrix(
    merge: MergeResult, parcels: Sequence[ParcelRecord]
) -> FeatureMatrix:
    """Per-parcel matrix over occupied parcels, labeled by whether any test matched."""
    occupied = {p.parcel_id for p in filter_occupied(parcels)}
    idx = [i for i, pid in enumerate(merge.prediction.parcel_ids) if pid in occupied]
    sub = merge.prediction.subset(np.array(idx, dtype=int))
    sub.labels = np.array(
        [int(merge.test_counts.get(pid, 0) > 0) for pid in sub.parcel_ids], dtype=np.int8
    )
    return sub


# ---------------------------------------------------------------------------
# artifact I/O (encoded matrices and the unmatched list)

def _fmt(v: float) -> str:
    if np.isnan(v):
        return ""
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def save_matrix_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    """Write an encoded matrix with id/label/date metadata columns first."""
    if not matrix.encoded:
        raise ValueError("only encoded matrices are persisted")
    meta = ["parcel_id"]
    if matrix.sample_ids is not None:
        meta.append("sample_id")
    if matrix.sample_dates is not None:
        meta.append("sample_date")
    if matrix.sources is not None:
        meta.append("source")
    if matrix.labels is not None:
        meta.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(meta + matrix.feature_names)
        for i in range(matrix.n_rows):
            row = [matrix.parcel_ids[i]]
            if matrix.sample_ids is not None:
                row.append(matrix.sample_ids[i])
            if matrix.sample_dates is not None:
                row.append(matrix.sample_dates[i].isoformat())
            if matrix.sources is not None:
                row.append(matrix.sources[i])
            if matrix.labels is not None:
                row.append(str(int(matrix.labels[i])))
            row.extend(_fmt(v) for v in matrix.values[i])
            writer.writerow(row)


def load_matrix_csv(path: str | Path, encoding_map: Optional[dict] = None) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        meta_cols = [c for c in ("parcel_id", "sample_id", "sample_date", "source", "label")
                     if c in header[:5]]
        n_meta = len(meta_cols)
        feature_names = header[n_meta:]
        ids, sids, dates, sources, labels, rows = [], [], [], [], [], []
        for row in reader:
            m = dict(zip(meta_cols, row[:n_meta]))
            ids.append(m["parcel_id"])
            if "sample_id" in m:
                sids.append(m["sample_id"])
            if "sample_date" in m:
                dates.append(dt.date.fromisoformat(m["sample_date"]))
            if "source" in m:
                sources.append(m["source"])
            if "label" in m:
                labels.append(int(m["label"]))
            rows.append([np.nan if v == "" else float(v) for v in row[n_meta:]])
    values = np.array(rows, dtype=float).reshape(len(rows), len(feature_names))
    return FeatureMatrix(
        feature_names=feature_names,
        values=values,
        parcel_ids=ids,
        labels=np.array(labels, dtype=np.int8) if labels else None,
        sample_dates=dates or None,
        sample_ids=sids or None,
        sources=sources or None,
        encoding_map=encoding_map or {"columns": [], "categories": {}},
    )


def write_unmatched_csv(unmatched: Sequence[UnmatchedTest], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "address", "reason"])
        for u in unmatched:
            writer.writerow([u.sample_id, u.address_raw, u.reason])
