"""Domain record types and constants shared across the toolkit."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Action level for lead in drinking water; a test is a positive label only
# when it reads strictly above this many ppb.
LEAD_ACTION_PPB = 15

# Acceptable sampling window for incoming test records.
SAMPLE_WINDOW = (dt.date(2015, 9, 1), dt.date(2017, 5, 31))

YEAR_BUILT_RANGE = (1800, 2017)

MATERIAL_VOCAB = frozenset({"lead", "copper", "galvanized", "plastic", "other", "unknown"})
CONFIDENCE_VOCAB = frozenset({"recorded", "inferred", "unknown"})
SOURCE_VOCAB = frozenset({"residential", "sentinel"})

# Housing-survey condition grades that imply the structure is occupied.
OCCUPIED_CONDITIONS = frozenset({"good", "fair", "poor"})


@dataclass
class ParcelRecord:
    parcel_id: str
    address_raw: str
    year_built: Optional[int] = None
    land_value: Optional[float] = None
    building_value: Optional[float] = None
    home_sev: Optional[float] = None
    land_improvements_value: Optional[float] = None
    parcel_acres: Optional[float] = None
    latitude: Optional[float] = None
    longitude: Optional[float] = None
    census_tract: Optional[str] = None
    block_group: Optional[str] = None
    block: Optional[str] = None
    usps_active: Optional[bool] = None
    housing_condition_2014: Optional[str] = None
    property_class: Optional[str] = None


@dataclass
class WaterTestRecord:
    sample_id: str
    address_raw: str
    sample_date: dt.date
    lead_ppb: int
    copper_ppb: Optional[int] = None
    source: str = "residential"


@dataclass
class CensusBlockRecord:
    block_group_id: str
    aggregates: dict[str, Optional[float]] = field(default_factory=dict)


@dataclass
class ServiceLineRecord:
    parcel_id: str
    public_material: str = "unknown"
    private_material: str = "unknown"
    record_confidence: str = "unknown"


@dataclass
class FeatureMatrix:
    """Tabular features keyed by parcel, optionally labeled per test row.

    ``values`` is an object array before encoding (numbers, category strings,
    or None) and a float64 array afterwards, with NaN marking missing numerics
    so the tree learner can route them. ``encoding_map`` is None until
    ``encode_features`` has run.
    """

    feature_names: list[str]
    values: np.ndarray
    parcel_ids: list[str]
    labels: Optional[np.ndarray] = None
    sample_dates: Optional[list[dt.date]] = None
    sample_ids: Optional[list[str]] = None
    sources: Optional[list[str]] = None
    encoding_map: Optional[dict] = None

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValueError("feature values must be a 2-d array")
        if self.values.shape[1] != len(self.feature_names):
            raise ValueError("row width does not match feature_names")
        if self.values.shape[0] != len(self.parcel_ids):
            raise ValueError("row count does not match parcel_ids")
        if self.labels is not None and len(self.labels) != len(self.parcel_ids):
            raise ValueError("label count does not match row count")

    @classmethod
    def from_arrays(
        cls,
        values,
        labels=None,
        parcel_ids: Optional[list[str]] = None,
        feature_names: Optional[list[str]] = None,
        encoded: bool = True,
    ) -> "FeatureMatrix":
        """Build a matrix from plain arrays; parcels default to one per row."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        n, d = values.shape
        return cls(
            feature_names=feature_names or [f"x{j}" for j in range(d)],
            values=values,
            parcel_ids=parcel_ids or [f"row{i}" for i in range(n)],
            labels=None if labels is None else np.asarray(labels, dtype=np.int8),
            encoding_map={"columns": [], "categories": {}} if encoded else None,
        )

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def encoded(self) -> bool:
        return self.encoding_map is not None

    def subset(self, row_idx: np.ndarray) -> "FeatureMatrix":
        """Row-sliced copy preserving all aligned metadata."""
        idx = np.asarray(row_idx)
        take = lambda seq: [seq[i] for i in idx] if seq is not None else None
        return FeatureMatrix(
            feature_names=list(self.feature_names),
            values=self.values[idx],
            parcel_ids=take(self.parcel_ids),
            labels=self.labels[idx] if self.labels is not None else None,
            sample_dates=take(self.sample_dates),
            sample_ids=take(self.sample_ids),
            sources=take(self.sources),
            encoding_map=self.encoding_map,
        )


@dataclass
class SplitAssignment:
    train_parcels: set[str]
    test_parcels: set[str]
    seed: int

    def __post_init__(self) -> None:
        overlap = self.train_parcels & self.test_parcels
        if overlap:
            raise ValueError(f"parcels on both sides of split: {sorted(overlap)[:5]}")
