"""Model persistence: bit-exact JSON roundtrips for every model kind."""

from __future__ import annotations

import json

import numpy as np
import pytest

from aquarisk import (
    AdaBoostConfig,
    GBTConfig,
    cross_fit_calibrated,
    dumps_model,
    load_model,
    loads_model,
    predict_adaboost,
    predict_margin,
    save_model,
    train_adaboost,
    train_gbt,
)
from aquarisk.calibrate import CalibratedClassifier
from aquarisk.serialize import FORMAT_VERSION, model_document, model_from_document

from conftest import make_matrix


def _training_data(seed, n=60, with_nans=True):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    if with_nans:
        X[rng.random(size=(n, 4)) < 0.08] = np.nan
    labels = (np.nan_to_num(X[:, 0]) + rng.normal(0, 0.6, n) > 0).astype(int)
    if len(np.unique(labels)) < 2:
        labels[:2] = [0, 1]
    return make_matrix(X, labels=labels, parcel_ids=[f"P{i % 20}" for i in range(n)]), X


def test_gbt_roundtrip_is_bit_exact():
    matrix, X = _training_data(60)
    model = train_gbt(matrix, GBTConfig(n_trees=15, max_depth=3))
    text = dumps_model(model)
    back = loads_model(text)
    assert dumps_model(back) == text
    probe = np.nan_to_num(X)[:10]
    assert predict_margin(back, probe).tolist() == predict_margin(model, probe).tolist()
    assert back.config == model.config
    assert back.feature_names == model.feature_names
    assert back.encoding_map == model.encoding_map


def test_adaboost_roundtrip_is_bit_exact():
    matrix, X = _training_data(61)
    model = train_adaboost(matrix, AdaBoostConfig(n_estimators=10))
    text = dumps_model(model)
    back = loads_model(text)
    assert dumps_model(back) == text
    s0, c0 = predict_adaboost(model, X)
    s1, c1 = predict_adaboost(back, X)
    assert s0.tolist() == s1.tolist()
    assert c0.tolist() == c1.tolist()
    assert back.medians.tolist() == model.medians.tolist()
    assert back.indicator_features == model.indicator_features
    assert [l.alpha for l in back.learners] == [l.alpha for l in model.learners]
    assert [l.gini_decrease for l in back.learners] == [
        l.gini_decrease for l in model.learners
    ]


def test_calibrated_wrapper_roundtrip_is_bit_exact():
    matrix, X = _training_data(62, with_nans=False)
    clf = cross_fit_calibrated(
        matrix, lambda m: train_gbt(m, GBTConfig(n_trees=8)), folds=3, seed=1
    )
    text = dumps_model(clf)
    back = loads_model(text)
    assert isinstance(back, CalibratedClassifier)
    assert dumps_model(back) == text
    assert (back.cal_map.a, back.cal_map.b) == (clf.cal_map.a, clf.cal_map.b)
    assert back.cal_map.fit_folds == 3
    assert back.predict_proba(X).tolist() == clf.predict_proba(X).tolist()


def test_document_envelope_fields():
    matrix, _ = _training_data(63, n=20, with_nans=False)
    doc = model_document(train_gbt(matrix, GBTConfig(n_trees=2)))
    assert doc["version"] == FORMAT_VERSION == "gbt-v1"
    assert doc["kind"] == "gbt"
    assert doc["feature_names"] == matrix.feature_names
    assert "calibration" not in doc

    ada = model_document(train_adaboost(matrix, AdaBoostConfig(n_estimators=2)))
    assert ada["kind"] == "adaboost"
    assert ada["version"] == FORMAT_VERSION


def test_unknown_version_and_kind_are_rejected():
    matrix, _ = _training_data(64, n=20, with_nans=False)
    doc = model_document(train_gbt(matrix, GBTConfig(n_trees=2)))
    stale = dict(doc, version="gbt-v2")
    with pytest.raises(ValueError, match="version"):
        model_from_document(stale)
    weird = dict(doc, kind="forest")
    with pytest.raises(ValueError, match="unknown model kind"):
        model_from_document(weird)
    with pytest.raises(TypeError, match="cannot serialize"):
        model_document({"not": "a model"})


def test_trailing_tree_nodes_are_rejected():
    matrix, _ = _training_data(65, n=20, with_nans=False)
    doc = model_document(train_gbt(matrix, GBTConfig(n_trees=2)))
    doc["trees"][0].append({"w": 0.1})  # orphan node after a complete preorder walk
    with pytest.raises(ValueError, match="trailing"):
        model_from_document(doc)


def test_save_and_load_files(tmp_path):
    matrix, X = _training_data(66, with_nans=False)
    model = train_gbt(matrix, GBTConfig(n_trees=5))
    path = tmp_path / "models" "model.json"
    save_model(model, path)
    assert path.read_text().endswith("\n")
    json.loads(path.read_text())  # the file is plain JSON
    back = load_model(path)
    assert dumps_model(back) == dumps_model(model)


def test_load_missing_file_names_the_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing model"):
        load_model(tmp_path / "nope.json")


def test_retraining_and_reloading_agree_bitwise():
    matrix, _ = _training_data(67)
    cfg = GBTConfig(n_trees=12, seed=5)
    first = dumps_model(train_gbt(matrix, cfg))
    second = dumps_model(loads_model(dumps_model(train_gbt(matrix, cfg))))
    assert first == second


def test_documents_never_contain_nan():
    matrix, _ = _training_data(68)
    model = train_gbt(matrix, GBTConfig(n_trees=10))
    dumps_model(model)  # allow_nan=False would raise if any slipped through
    ada = train_adaboost(matrix, AdaBoostConfig(n_estimators=5))
    dumps_model(ada)
