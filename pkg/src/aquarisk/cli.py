"""Command-line pipeline driver.

One TOML config plus a handful of flag overrides drives every subcommand;
all artifacts land under a single output directory with their SHA-256 hashes
recorded in manifest.json, so downstream commands can detect stale inputs
and identical (config, seed) runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .adaboost import AdaBoostConfig, gini_importance, train_adaboost
from .bias_quantile import monthly_p90_series
from .calibrate import cross_fit_calibrated
from .evaluate import cross_validate, learning_curve, roc_auc
from .gbt import GBTConfig, split_count_importance, train_gbt
from .ingest import (
    build_submission_matrix,
    encode_features,
    filter_occupied,
    group_split,
    load_matrix_csv,
    merge_datasets,
    parse_dataset,
    save_matrix_csv,
    write_unmatched_csv,
)
from .risk_report import (
    assign_tiers,
    quartile_tables,
    rank_untested,
    submission_counts_from_matches,
    write_quartiles_csv,
    write_ranked_csv,
    write_ranked_geojson,
)
from .serialize import load_model, save_model
from .synth import SynthConfig, generate_city, generate_tests, inject_selection_bias, write_city

DATASET_KINDS = ("parcels", "tests", "census", "service_lines")

DEFAULT_QUARTILE_ATTRIBUTES = [
    "building_value", "land_value", "home_sev", "land_improvements_value", "parcel_acres",
]


class PipelineError(Exception):
    """User-facing configuration or dependency problem; exits nonzero."""


@dataclasses.dataclass
class PipelineConfig:
    seed: int
    threads: int
    out: Path
    raw: dict

    def section(self, name: str) -> dict:
        value = self.raw.get(name, {})
        if not isinstance(value, dict):
            raise PipelineError(f"config section [{name}] must be a table")
        return dict(value)

    def data_path(self, kind: str) -> Path:
        data = self.raw.get("data", {})
        if kind in data:
            return Path(str(data[kind]))
        return self.out / "synth" / f"{kind}.csv"


def load_pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    raw: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise PipelineError(f"config file not found: {path}")
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise PipelineError(f"config parse error: {exc}") from exc
    cli_seed = getattr(args, "seed", None)
    cli_threads = getattr(args, "threads", None)
    seed = cli_seed if cli_seed is not None else raw.get("seed", 0)
    threads = cli_threads if cli_threads is not None else raw.get("threads", 1)
    out = getattr(args, "out", None) or raw.get("out") or os.environ.get("AQUARISK_OUT")
    if not out:
        raise PipelineError(
            "no output directory: pass --out, set out in the config, or set AQUARISK_OUT"
        )
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise PipelineError(f"seed must be an integer, got {seed!r}")
    if not isinstance(threads, int) or threads < 1:
        raise PipelineError(f"threads must be a positive integer, got {threads!r}")
    return PipelineConfig(seed=seed, threads=threads, out=Path(out), raw=raw)


# ---------------------------------------------------------------------------
# manifest


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _rel(out: Path, path: Path) -> str | None:
    try:
        return path.resolve().relative_to(out.resolve()).as_posix()
    except ValueError:
        return None


def _load_manifest(out: Path) -> dict:
    path = out / "manifest.json"
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"seed": None, "artifacts": {}}


def _verify_upstream(cfg: PipelineConfig, manifest: dict, paths: list[Path],
                     prefixes: tuple[str, ...] = ()) -> None:
    """Stale-input guard: recorded artifacts must match their manifest hash.

    ``paths`` are the command's direct inputs (must exist, hash-checked when
    recorded); ``prefixes`` name earlier pipeline stages whose recorded
    artifacts are also hash-checked if still present, so editing any upstream
    file invalidates every later command, not just the next one.
    """
    listed = manifest.get("artifacts", {})
    tracked = [(r, p) for p in paths if (r := _rel(cfg.out, p)) is not None and r in listed]
    if tracked and manifest.get("seed") is not None and manifest["seed"] != cfg.seed:
        raise PipelineError(
            f"stale upstream artifacts: manifest was written with seed {manifest['seed']}, "
            f"this run uses seed {cfg.seed}; rerun the pipeline from the start"
        )
    for rel, path in tracked:
        if not path.exists():
            raise PipelineError(f"missing upstream artifact: {path}")
        if _sha256(path) != listed[rel]:
            raise PipelineError(f"stale upstream artifact (hash mismatch): {path}")
    direct = {rel for rel, _ in tracked}
    for rel, digest in listed.items():
        if rel in direct or not rel.startswith(prefixes):
            continue
        path = cfg.out / rel
        if path.exists() and _sha256(path) != digest:
            raise PipelineError(f"stale upstream artifact (hash mismatch): {path}")


def _record_artifacts(cfg: PipelineConfig, manifest: dict, paths: list[Path]) -> list[str]:
    manifest["seed"] = cfg.seed
    rels = []
    for path in paths:
        rel = _rel(cfg.out, path)
        if rel is not None:
            manifest["artifacts"][rel] = _sha256(path)
            rels.append(rel)
    manifest["artifacts"] = dict(sorted(manifest["artifacts"].items()))
    out_path = cfg.out / "manifest.json"
    out_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return rels


# ---------------------------------------------------------------------------
# helpers


def _config_from_section(cls, section: dict, seed: int):
    """Build a model config dataclass from a TOML table, master seed filled in."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise PipelineError(f"unknown {cls.__name__} keys: {unknown}")
    kwargs = dict(section)
    kwargs.setdefault("seed", seed)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise PipelineError(f"bad {cls.__name__}: {exc}") from exc


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise PipelineError(f"missing {hint}: {path}")
    return path


def _require_model(path: Path) -> Path:
    if not path.exists():
        raise PipelineError(f"missing model: {path}; run train first")
    return path


def _load_encoded(path: Path, encoding: dict | None):
    matrix = load_matrix_csv(path)
    if encoding is not None:
        matrix.encoding_map = encoding
    return matrix


def _read_encoding(cfg: PipelineConfig) -> dict | None:
    path = cfg.out / "ingest" / "encoding.json"
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return None


def _read_matches(cfg: PipelineConfig) -> list[dict]:
    import csv as _csv

    path = _require(cfg.out / "ingest" / "matches.csv", "ingest artifacts (run ingest first)")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(_csv.DictReader(fh))


def _fmt_float(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def _write_csv(path: Path, header: list[str], rows) -> None:
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(cfg: PipelineConfig) -> dict:
    section = cfg.section("synth")
    strength = float(section.pop("bias_strength", 1.0))
    months = section.pop("months", None)
    section.pop("seed", None)
    known = {f.name for f in dataclasses.fields(SynthConfig)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise PipelineError(f"unknown synth config keys: {unknown}")
    try:
        synth_cfg = SynthConfig(seed=cfg.seed, **section)
        city = generate_city(synth_cfg)
        if strength != 1.0:
            inject_selection_bias(city, strength)
        tests = generate_tests(city, months)
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc
    paths = write_city(city, tests, cfg.out / "synth")
    manifest = _load_manifest(cfg.out)
    rels = _record_artifacts(cfg, manifest, list(paths.values()))
    return {
        "n_parcels": synth_cfg.n_parcels,
        "n_occupied": int(city.truth.occupied.sum()),
        "n_tests": len(tests.records),
        "outputs": rels,
    }


def _cmd_ingest(cfg: PipelineConfig) -> dict:
    paths = {kind: _require(cfg.data_path(kind), f"{kind} dataset") for kind in DATASET_KINDS}
    manifest = _load_manifest(cfg.out)
    _verify_upstream(cfg, manifest, list(paths.values()), prefixes=("synth/",))

    try:
        parsed = {kind: parse_dataset(path, kind) for kind, path in paths.items()}
        merge = merge_datasets(
            parsed["parcels"].records, parsed["tests"].records,
            parsed["census"].records, parsed["service_lines"].records,
        )
        enc_pred = encode_features(merge.prediction, merge.schema)
        enc_labeled = encode_features(merge.labeled, merge.schema, enc_pred.encoding_map)
        submission = build_submission_matrix(merge, parsed["parcels"].records)
        enc_submission = encode_features(submission, merge.schema, enc_pred.encoding_map)
    except (ValueError, RuntimeError) as exc:
        raise PipelineError(str(exc)) from exc

    out = cfg.out / "ingest"
    out.mkdir(parents=True, exist_ok=True)
    save_matrix_csv(enc_labeled, out / "labeled.csv")
    save_matrix_csv(enc_pred, out / "prediction.csv")
    save_matrix_csv(enc_submission, out / "submission.csv")
    write_unmatched_csv(merge.unmatched, out / "unmatched.csv")
    _write_csv(out / "matches.csv", ["sample_id", "parcel_id", "source", "sample_date"], (
        [sid, merge.matches[sid], enc_labeled.sources[i], enc_labeled.sample_dates[i].isoformat()]
        for i, sid in enumerate(enc_labeled.sample_ids)
    ))
    (out / "encoding.json").write_text(
        json.dumps(enc_pred.encoding_map, sort_keys=True) + "\n", encoding="utf-8"
    )

    outputs = [out / n for n in (
        "labeled.csv", "prediction.csv", "submission.csv",
        "unmatched.csv", "matches.csv", "encoding.json",
    )]
    rels = _record_artifacts(cfg, manifest, outputs)
    return {
        "n_parcels": merge.prediction.n_rows,
        "n_labeled": enc_labeled.n_rows,
        "n_submission": enc_submission.n_rows,
        "n_unmatched": len(merge.unmatched),
        "n_discarded": sum(p.n_discarded for p in parsed.values()),
        "outputs": rels,
    }


def _cmd_train(cfg: PipelineConfig) -> dict:
    ing = cfg.out / "ingest"
    labeled_path = _require(ing / "labeled.csv", "ingest artifacts (run ingest first)")
    submission_path = _require(ing / "submission.csv", "ingest artifacts (run ingest first)")
    manifest = _load_manifest(cfg.out)
    _verify_upstream(cfg, manifest, [labeled_path, submission_path, ing / "encoding.json"],
                     prefixes=("synth/", "ingest/"))

    encoding = _read_encoding(cfg)
    labeled = _load_encoded(labeled_path, encoding)
    submission = _load_encoded(submission_path, encoding)

    gbt_cfg = _config_from_section(GBTConfig, cfg.section("gbt"), cfg.seed)
    ada_cfg = _config_from_section(AdaBoostConfig, cfg.section("adaboost"), cfg.seed)
    cal_folds = int(cfg.section("calibration").get("folds", 5))

    try:
        lead_model = cross_fit_calibrated(
            labeled, lambda m: train_gbt(m, gbt_cfg), folds=cal_folds, seed=cfg.seed)
        submission_model = cross_fit_calibrated(
            submission, lambda m: train_adaboost(m, ada_cfg), folds=cal_folds, seed=cfg.seed)
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc

    models = cfg.out / "models"
    models.mkdir(parents=True, exist_ok=True)
    save_model(lead_model, models / "lead_model.json")
    save_model(submission_model, models / "submission_model.json")

    lead_imp = split_count_importance(lead_model.base)
    sub_imp = gini_importance(submission_model.base)
    _write_csv(models / "lead_importance.csv", ["feature", "importance"], (
        [name, repr(v)] for name, v in sorted(lead_imp.items(), key=lambda kv: (-kv[1], kv[0]))
    ))
    _write_csv(models / "submission_importance.csv", ["feature", "importance"], (
        [name, repr(v)] for name, v in sorted(sub_imp.items(), key=lambda kv: (-kv[1], kv[0]))
    ))

    outputs = [models / n for n in (
        "lead_model.json", "submission_model.json",
        "lead_importance.csv", "submission_importance.csv",
    )]
    rels = _record_artifacts(cfg, manifest, outputs)
    return {
        "n_labeled": labeled.n_rows,
        "n_submission": submission.n_rows,
        "lead_trees": len(lead_model.base.trees),
        "submission_learners": len(submission_model.base.learners),
        "outputs": rels,
    }


def _cmd_evaluate(cfg: PipelineConfig) -> dict:
    ing = cfg.out / "ingest"
    labeled_path = _require(ing / "labeled.csv", "ingest artifacts (run ingest first)")
    manifest = _load_manifest(cfg.out)
    _verify_upstream(cfg, manifest, [labeled_path], prefixes=("synth/", "ingest/"))

    labeled = _load_encoded(labeled_path, _read_encoding(cfg))
    section = cfg.section("evaluate")
    folds = int(section.get("folds", 5))
    runs = int(section.get("runs", 1))
    metric = str(section.get("metric", "auc"))
    test_fraction = float(section.get("test_fraction", 0.25))
    gbt_cfg = _config_from_section(GBTConfig, cfg.section("gbt"), cfg.seed)

    try:
        report = cross_validate(
            labeled, "gbt", gbt_cfg, folds=folds, n_runs=runs, seed=cfg.seed, metric=metric)
        split = group_split(labeled, test_fraction, cfg.seed)
        train_idx = np.array(
            [i for i, pid in enumerate(labeled.parcel_ids) if pid in split.train_parcels], dtype=int)
        test_idx = np.array(
            [i for i, pid in enumerate(labeled.parcel_ids) if pid in split.test_parcels], dtype=int)
        held_model = train_gbt(labeled.subset(train_idx), gbt_cfg)
        held = labeled.subset(test_idx)
        curve = roc_auc(held_model.predict_proba(held.values), held.labels)
    except (ValueError, RuntimeError) as exc:
        raise PipelineError(str(exc)) from exc

    reports = cfg.out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    _write_csv(reports / "cv_auc.csv", ["run", metric], (
        [i, repr(v)] for i, v in enumerate(report.values)
    ))
    _write_csv(reports / "roc.csv", ["threshold", "fpr", "tpr"], (
        [repr(float(t)), repr(float(f)), repr(float(p))]
        for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr)
    ))
    outputs = [reports / "cv_auc.csv", reports / "roc.csv"]

    if bool(section.get("learning_curve", False)):
        lc = learning_curve(labeled, gbt_cfg, folds=folds, seed=cfg.seed)
        _write_csv(reports / "learning_curve.csv",
                   ["fraction", "train_mean", "train_sd", "val_mean", "val_sd"], (
                       [repr(fr), _fmt_float(tm), _fmt_float(ts), _fmt_float(vm), _fmt_float(vs)]
                       for fr, tm, ts, vm, vs in zip(
                           lc.fractions, lc.train_mean, lc.train_sd, lc.val_mean, lc.val_sd)
                   ))
        outputs.append(reports / "learning_curve.csv")

    rels = _record_artifacts(cfg, manifest, outputs)
    return {
        f"{metric}_mean": round(report.mean, 6),
        f"{metric}_sd": round(report.sd, 6),
        "holdout_auc": round(curve.auc, 6),
        "folds": folds,
        "runs": runs,
        "outputs": rels,
    }


def _cmd_predict(cfg: PipelineConfig) -> dict:
    prediction_path = _require(cfg.out / "ingest" / "prediction.csv",
                               "ingest artifacts (run ingest first)")
    model_path = _require_model(cfg.out / "models" / "lead_model.json")
    manifest = _load_manifest(cfg.out)
    _verify_upstream(cfg, manifest, [prediction_path, model_path],
                     prefixes=("synth/", "ingest/", "models/"))

    model = load_model(model_path)
    matrix = _load_encoded(prediction_path, None)
    if matrix.feature_names != model.base.feature_names:
        raise PipelineError("prediction matrix columns do not match the trained model")
    probs = model.predict_proba(matrix.values)

    reports = cfg.out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    _write_csv(reports / "predictions.csv", ["parcel_id", "probability"], (
        [pid, repr(float(p))] for pid, p in zip(matrix.parcel_ids, probs)
    ))
    rels = _record_artifacts(cfg, manifest, [reports / "predictions.csv"])
    return {
        "n_parcels": matrix.n_rows,
        "mean_probability": round(float(np.mean(probs)), 6),
        "outputs": rels,
    }


def _cmd_rank(cfg: PipelineConfig) -> dict:
    prediction_path = _require(cfg.out / "ingest" / "prediction.csv",
                               "ingest artifacts (run ingest first)")
    model_path = _require_model(cfg.out / "models" / "lead_model.json")
    parcels_path = _require(cfg.data_path("parcels"), "parcels dataset")
    manifest = _load_manifest(cfg.out)
    _verify_upstream(cfg, manifest, [prediction_path, model_path, parcels_path],
                     prefixes=("synth/", "ingest/", "models/"))

    section = cfg.section("rank")
    top_k = int(section.get("top_k", 1000))
    high_min = float(section.get("high_min", 0.33))
    low_max = float(section.get("low_max", 0.15))

    model = load_model(model_path)
    matrix = _load_encoded(prediction_path, None)
    tested = {row["parcel_id"] for row in _read_matches(cfg)}
    try:
        ranked = assign_tiers(rank_untested(model, matrix, tested, top_k), high_min, low_max)
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc

    parcels = parse_dataset(parcels_path, "parcels").records
    coords = {p.parcel_id: (p.latitude, p.longitude) for p in parcels}
    reports = cfg.out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    write_ranked_csv(ranked, coords, reports / "ranked_risk.csv")
    write_ranked_geojson(ranked, coords, reports / "ranked_risk.geojson")

    rels = _record_artifacts(cfg, manifest, [reports / "ranked_risk.csv",
                                             reports / "ranked_risk.geojson"])
    tiers = {t: sum(1 for a in ranked if a.tier == t) for t in ("high", "medium", "low")}
    return {
        "n_ranked": len(ranked),
        "n_untested_pool": len({pid for pid in matrix.parcel_ids if pid not in tested}),
        "tiers": tiers,
        "outputs": rels,
    }


def _cmd_series(cfg: PipelineConfig) -> dict:
    tests_path = _require(cfg.data_path("tests"), "tests dataset")
    prediction_path = _require(cfg.out / "ingest" / "prediction.csv",
                               "ingest artifacts (run ingest first)")
    model_path = _require_model(cfg.out / "models" / "submission_model.json")
    manifest = _load_manifest(cfg.out)
    _verify_upstream(cfg, manifest, [tests_path, prediction_path, model_path],
                     prefixes=("synth/", "ingest/", "models/"))

    section = cfg.section("series")
    weighting = bool(section.get("weighting", True))
    n_boot = int(section.get("n_boot", 1000))
    quantile = float(section.get("quantile", 0.9))

    tests = parse_dataset(tests_path, "tests").records
    model = load_model(model_path)
    matrix = _load_encoded(prediction_path, None)
    props = model.predict_proba(matrix.values)
    propensities = {pid: float(p) for pid, p in zip(matrix.parcel_ids, props)}
    matches = {row["sample_id"]: row["parcel_id"] for row in _read_matches(cfg)}

    try:
        residential = monthly_p90_series(
            tests, propensities, matches, source="residential", weighting=weighting,
            q=quantile, n_boot=n_boot, seed=cfg.seed, threads=cfg.threads)
        sentinel = monthly_p90_series(
            tests, propensities, matches, source="sentinel", weighting=False,
            q=quantile, n_boot=n_boot, seed=cfg.seed, threads=cfg.threads)
    except ValueError as exc:
        raise PipelineError(str(exc)) from exc

    reports = cfg.out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    rows = []
    for series in (residential, sentinel):
        for m in series.months:
            rows.append([
                m.month, m.n_samples, repr(float(m.estimate_ppb)), repr(float(m.bootstrap_sd)),
                int(m.weighted), m.source, int(m.compliant),
            ])
    _write_csv(reports / "lead_series.csv",
               ["month", "n", "estimate_ppb", "bootstrap_sd", "weighted", "source", "compliant"],
               rows)

    rels = _record_artifacts(cfg, manifest, [reports / "lead_series.csv"])
    return {
        "n_months_residential": len(residential.months),
        "n_months_sentinel": len(sentinel.months),
        "residential_mean_p90": round(
            float(np.mean([m.estimate_ppb for m in residential.months])), 6
        ) if residential.months else None,
        "outputs": rels,
    }


def _cmd_quartiles(cfg: PipelineConfig) -> dict:
    parcels_path = _require(cfg.data_path("parcels"), "parcels dataset")
    manifest = _load_manifest(cfg.out)
    _verify_upstream(cfg, manifest, [parcels_path], prefixes=("synth/", "ingest/"))

    section = cfg.section("quartiles")
    attributes = list(section.get("attributes", DEFAULT_QUARTILE_ATTRIBUTES))
    stratify_year = section.get("stratify_year", 1940)
    stratify_year = None if stratify_year in (0, None, False) else int(stratify_year)

    parcels = parse_dataset(parcels_path, "parcels").records
    occupied = filter_occupied(parcels)
    counts = submission_counts_from_matches({
        row["sample_id"]: row["parcel_id"]
        for row in _read_matches(cfg) if row["source"] == "residential"
    })
    try:
        rows = quartile_tables(occupied, counts, attributes, stratify_year)
    except (ValueError, AttributeError) as exc:
        raise PipelineError(str(exc)) from exc

    reports = cfg.out / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    write_quartiles_csv(rows, reports / "quartiles.csv")
    rels = _record_artifacts(cfg, manifest, [reports / "quartiles.csv"])
    bucket_n = {b: next((r.n for r in rows if r.bucket == b and r.stratum is None), 0)
                for b in ("zero", "one", "two_or_more")}
    return {
        "n_occupied": len(occupied),
        "buckets": bucket_n,
        "n_rows": len(rows),
        "outputs": rels,
    }


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "rank": _cmd_rank,
    "series": _cmd_series,
    "quartiles": _cmd_quartiles,
}


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being clobbered
    # by the subparser's default, so both positions work
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="master seed (overrides config)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker cap; results do not depend on it")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="output directory (or config 'out', or $AQUARISK_OUT)")
    parser = argparse.ArgumentParser(
        prog="aquarisk",
        description="Water-lead risk pipeline: synthesize, ingest, train, and report.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="|".join(_COMMANDS))
    for name in _COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_pipeline_config(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        summary = _COMMANDS[args.command](cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    line = {"command": args.command, "seed": cfg.seed}
    line.update(summary)
    print(json.dumps(line, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
