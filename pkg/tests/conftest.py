"""Shared fixtures: small synthetic cities and matrix builders."""

from __future__ import annotations

import numpy as np
import pytest

from aquarisk import SynthConfig, generate_city, generate_tests
from aquarisk.records import FeatureMatrix


def make_matrix(values, labels=None, parcel_ids=None, feature_names=None) -> FeatureMatrix:
    return FeatureMatrix.from_arrays(
        np.asarray(values, dtype=float),
        labels=labels,
        parcel_ids=parcel_ids,
        feature_names=feature_names,
    )


@pytest.fixture(scope="session")
def small_city():
    """A compact city reused by read-only tests (do not mutate)."""
    city = generate_city(SynthConfig(n_parcels=800, seed=3))
    tests = generate_tests(city)
    return city, tests


@pytest.fixture(scope="session")
def default_city():
    """The full-size default city (do not mutate); shared by the slower
    distribution checks and the acceptance pipeline."""
    city = generate_city(SynthConfig())
    tests = generate_tests(city)
    return city, tests
