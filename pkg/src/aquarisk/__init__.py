"""Residential water-lead risk toolkit.

Merges parcel, water-test, census and service-line data, trains calibrated
tree-ensemble classifiers for elevated-lead risk and test-submission
propensity, corrects the voluntary-sampling selection bias by inverse
propensity weighting, and emits monthly 90th-percentile lead series and
ranked per-parcel risk assessments. A built-in synthetic city generator with
retained ground truth makes the whole pipeline testable end to end.
"""

from .adaboost import AdaBoostConfig, AdaBoostModel, gini_importance, predict_adaboost, train_adaboost
from .bias_quantile import (
    MonthlySeries,
    MonthSummary,
    bootstrap_quantile_sd,
    compute_weights,
    monthly_p90_series,
    unweighted_quantile,
    weighted_quantile,
)
from .calibrate import CalibratedClassifier, CalibrationMap, cross_fit_calibrated, fit_calibration
from .evaluate import (
    CvReport,
    LearningCurveReport,
    cross_validate,
    grid_search,
    learning_curve,
    rank_auc,
    recall_at_threshold,
    roc_auc,
)
from .gbt import GBTConfig, GBTModel, predict_margin, predict_proba, split_count_importance, train_gbt
from .ingest import (
    FeatureSchema,
    MergeResult,
    build_submission_matrix,
    encode_features,
    filter_occupied,
    group_split,
    merge_datasets,
    normalize_address,
    parse_dataset,
)
from .records import (
    LEAD_ACTION_PPB,
    CensusBlockRecord,
    FeatureMatrix,
    ParcelRecord,
    ServiceLineRecord,
    SplitAssignment,
    WaterTestRecord,
)
from .risk_report import (
    QuartileRow,
    RiskAssessment,
    assign_tiers,
    quartile_tables,
    quartiles_hinges,
    rank_untested,
)
from .serialize import dumps_model, load_model, loads_model, save_model
from .synth import (
    GroundTruth,
    SynthCity,
    SynthConfig,
    generate_city,
    generate_tests,
    inject_selection_bias,
    write_city,
)

__version__ = "0.1.0"

__all__ = [
    "AdaBoostConfig", "AdaBoostModel", "gini_importance", "predict_adaboost", "train_adaboost",
    "MonthlySeries", "MonthSummary", "bootstrap_quantile_sd", "compute_weights",
    "monthly_p90_series", "unweighted_quantile", "weighted_quantile",
    "CalibratedClassifier", "CalibrationMap", "cross_fit_calibrated", "fit_calibration",
    "CvReport", "LearningCurveReport", "cross_validate", "grid_search", "learning_curve",
    "rank_auc", "recall_at_threshold", "roc_auc",
    "GBTConfig", "GBTModel", "predict_margin", "predict_proba", "split_count_importance",
    "train_gbt",
    "FeatureSchema", "MergeResult", "build_submission_matrix", "encode_features",
    "filter_occupied", "group_split", "merge_datasets", "normalize_address", "parse_dataset",
    "LEAD_ACTION_PPB", "CensusBlockRecord", "FeatureMatrix", "ParcelRecord",
    "ServiceLineRecord", "SplitAssignment", "WaterTestRecord",
    "QuartileRow", "RiskAssessment", "assign_tiers", "quartile_tables", "quartiles_hinges",
    "rank_untested",
    "dumps_model", "load_model", "loads_model", "save_model",
    "GroundTruth", "SynthCity", "SynthConfig", "generate_city", "generate_tests",
    "inject_selection_bias", "write_city",
    "__version__",
]
