"""Config-driven end-to-end runs.

A run is described by one JSON config (see :data:`DEFAULT_CONFIG`); every
artifact goes into ``<run_root>/run-<config hash>-s<seed>/`` together with a
``manifest.json`` that is enough to repeat the run. Reports carry no
timestamps, so the same config reproduces byte-identical reports.
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import logging
import platform
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .data import ActivityPeriod, filter_aligned, parse_records, segment_windows
from .errors import ConfigInvalid, StageFailure, WearAuthError
from .evaluation import SplitSpec, outlier_sweep_to_csv, sweep_to_csv
from .experiment import (KINDS, ExperimentSpec, cap_windows, default_kernel, outlier_sweep,
                         run_experiment, select_for)
from .features import Combo, feature_matrix
from .persist import persist_model
from .selection import APPROACHES
from .svm import KernelSpec, TrainConfig
from .synth import generate_dataset

log = logging.getLogger(__name__)

STAGES = ("synth", "ingest", "features", "select", "train", "eval",
          "sweep-threshold", "sweep-outlier", "report")

DEFAULT_CONFIG = {
    "seed": 42,
    "workers": 1,
    "stages": None,  # null: every stage, with synth only when data.csv is unset
    "data": {"csv": None, "met_scale": 1.0},
    "synth": {"n_subjects": 20, "minutes": 20160},
    "windows": {"cap": 300},
    "selection": {"alpha": 0.05, "tau": 0.5, "rho": 0.9,
                  "sd_top_k": {"sedentary": 20, "non_sedentary": 30}},
    "svm": {"C": 1.0, "gamma": 1.0, "degree": 2, "unary_gamma": 1.0, "nu": 0.0,
            "tol": 1e-3, "max_passes": 10_000, "normalize": True, "platt_folds": 3},
    "split": {"train_fraction": 0.75, "balanced": True, "chronological": False,
              "min_windows": 8},
    "experiments": [
        {"approach": "KS", "combo": "CM", "period": "sedentary", "kind": "binary"},
    ],
    "sweeps": {
        "threshold": [{"approach": "KS", "combo": "CM", "period": "sedentary"}],
        "outlier": [{"approach": "KS", "combo": "CM", "period": "sedentary",
                     "nu_grid": [0.0, 0.05, 0.1, 0.2, 0.3, 0.5]}],
    },
}


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_override(config: dict, assignment: str) -> dict:
    """Apply a ``dotted.key=value`` override; the value is parsed as JSON
    when possible and kept as a string otherwise."""
    if "=" not in assignment:
        raise ConfigInvalid(assignment, "expected key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out = copy.deepcopy(config)
    node = out
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigInvalid(key, "not a section")
    node[parts[-1]] = value
    return out


def _check(cond, field, reason):
    if not cond:
        raise ConfigInvalid(field, reason)


def _check_target(item, field, need_kind=False):
    _check(isinstance(item, dict), field, "must be an object")
    _check(str(item.get("approach", "")).upper() in APPROACHES, f"{field}.approach",
           f"one of {APPROACHES}")
    try:
        Combo.parse(item.get("combo", ""))
        ActivityPeriod.parse(item.get("period", ""))
    except (ValueError, KeyError) as exc:
        raise ConfigInvalid(field, str(exc)) from None
    if need_kind:
        _check(item.get("kind") in KINDS, f"{field}.kind", f"one of {KINDS}")


def validate_config(config: dict) -> dict:
    """Fill defaults and check every field the pipeline reads."""
    unknown = set(config) - set(DEFAULT_CONFIG)
    _check(not unknown, sorted(unknown)[0] if unknown else "", "unknown field")
    cfg = merge(DEFAULT_CONFIG, config)
    _check(isinstance(cfg["seed"], int), "seed", "must be an integer")
    _check(isinstance(cfg["workers"], int) and cfg["workers"] >= 1, "workers", "must be >= 1")
    if cfg["stages"] is None:
        cfg["stages"] = [s for s in STAGES if not (s == "synth" and cfg["data"]["csv"])]
    _check(isinstance(cfg["stages"], list), "stages", "must be a list or null")
    bad = [s for s in cfg["stages"] if s not in STAGES]
    _check(not bad, "stages", f"unknown stages {bad}")
    _check(("synth" in cfg["stages"]) != bool(cfg["data"]["csv"]), "data.csv",
           "give exactly one data source: the synth stage or data.csv")
    _check(cfg["synth"]["n_subjects"] >= 2, "synth.n_subjects", "must be >= 2")
    _check(cfg["synth"]["minutes"] >= 1, "synth.minutes", "must be >= 1")
    _check(cfg["windows"]["cap"] is None or cfg["windows"]["cap"] >= 1, "windows.cap",
           "must be null or >= 1")
    sel = cfg["selection"]
    _check(0 < sel["alpha"] < 1, "selection.alpha", "must be in (0, 1)")
    _check(0 < sel["tau"] <= 1, "selection.tau", "must be in (0, 1]")
    _check(0 < sel["rho"] < 1, "selection.rho", "must be in (0, 1)")
    svm = cfg["svm"]
    _check(svm["C"] > 0, "svm.C", "must be positive")
    _check(svm["gamma"] > 0 and svm["unary_gamma"] > 0, "svm.gamma", "must be positive")
    _check(svm["tol"] > 0, "svm.tol", "must be positive")
    _check(0 < cfg["split"]["train_fraction"] < 1, "split.train_fraction", "must be in (0, 1)")
    _check(isinstance(cfg["experiments"], list), "experiments", "must be a list")
    for k, item in enumerate(cfg["experiments"]):
        _check_target(item, f"experiments[{k}]", need_kind=True)
    for k, item in enumerate(cfg["sweeps"].get("threshold", [])):
        _check_target(item, f"sweeps.threshold[{k}]")
    for k, item in enumerate(cfg["sweeps"].get("outlier", [])):
        _check_target(item, f"sweeps.outlier[{k}]")
        _check(all(0 <= v <= 1 for v in item.get("nu_grid", [])),
               f"sweeps.outlier[{k}].nu_grid", "values must be in [0, 1]")
    return cfg


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_dir_for(config: dict, run_root) -> Path:
    return Path(run_root) / f"run-{config_hash(config)[:12]}-s{config['seed']}"


class _Run:
    def __init__(self, cfg: dict, root: Path):
        self.cfg = cfg
        self.root = root
        self.seed = cfg["seed"]
        self.artifacts: list[str] = []
        s = cfg["svm"]
        self.train_cfg = TrainConfig(C=s["C"], nu=s["nu"], tol=s["tol"],
                                     max_passes=s["max_passes"], seed=self.seed,
                                     normalize=s["normalize"], platt_folds=s["platt_folds"])
        sp = cfg["split"]
        self.split = SplitSpec(sp["train_fraction"], self.seed, sp["balanced"],
                               sp["chronological"], sp["min_windows"])
        self.features = {}
        self.feature_sets = {}

    def wants(self, stage):
        return stage in self.cfg["stages"]

    def write(self, rel: str, text: str):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.artifacts.append(rel)
        return path

    def kernel(self, kind):
        s = self.cfg["svm"]
        if kind == "binary":
            return KernelSpec.quadratic(s["gamma"], s["degree"])
        return default_kernel("unary", s["unary_gamma"])

    def feature_set(self, approach, combo, period):
        approach, combo = approach.upper(), Combo.parse(combo).name
        period = ActivityPeriod.parse(period).value
        key = (approach, combo, period)
        if key not in self.feature_sets:
            sel = self.cfg["selection"]
            top_k = sel["sd_top_k"]
            top_k = top_k[period] if isinstance(top_k, dict) else top_k
            fs = select_for(self.features[period], approach, combo, alpha=sel["alpha"],
                            tau=sel["tau"], rho=sel["rho"], sd_top_k=top_k)
            self.feature_sets[key] = fs
            if self.wants("select"):
                self.write(f"feature_sets/{approach}_{combo}_{period}.json", fs.to_json() + "\n")
        return self.feature_sets[key]


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageFailure:
                raise
            except (WearAuthError, OSError, ValueError) as exc:
                raise StageFailure(name, exc) from exc
        return inner
    return wrap


@_stage("ingest")
def _load_records(run: _Run):
    cfg = run.cfg
    if run.wants("synth"):
        ds = generate_dataset(cfg["synth"]["n_subjects"], cfg["synth"]["minutes"], run.seed)
        csv_path = run.root / "data" / "synthetic.csv"
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        ds.write(csv_path)
        run.artifacts += ["data/synthetic.csv", "data/profiles.json"]
        records = ds.records
        inputs = {}
    else:
        csv_path = Path(cfg["data"]["csv"])
        with open(csv_path) as fh:
            records = parse_records(fh, met_scale=cfg["data"]["met_scale"])
        inputs = {str(csv_path): _sha256(csv_path)}
    aligned, dropped = filter_aligned(records)
    return aligned, dropped, inputs


@_stage("features")
def _build_features(run: _Run, aligned, periods):
    counts = {}
    for period in sorted(periods):
        windows = segment_windows(aligned, period)
        counts[period] = {s: int(len(v)) for s, v in windows.by_subject().items()}
        fm = feature_matrix(windows, "CSMH",
                            include_activity=period == ActivityPeriod.NON_SEDENTARY.value)
        fm = cap_windows(fm, run.cfg["windows"]["cap"], run.seed)
        run.features[period] = fm
        if run.wants("features"):
            path = run.root / "features" / f"{period}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as fh:
                fm.to_csv(fh)
            run.artifacts.append(f"features/{period}.csv")
    return counts


@_stage("train")
def _run_experiment(run: _Run, item, probability):
    period = ActivityPeriod.parse(item["period"]).value
    spec = ExperimentSpec(item["approach"].upper(), Combo.parse(item["combo"]).name, period,
                          item["kind"], probability=probability and item["kind"] == "binary")
    fs = run.feature_set(spec.approach, spec.combo, period)
    cfg = run.train_cfg
    result = run_experiment(run.features[period], fs, spec, run.kernel(spec.kind), cfg,
                            run.split, workers=run.cfg["workers"])
    if run.wants("train"):
        for o in result.outcomes:
            o.model.info["split"] = asdict(run.split)
            rel = f"models/{spec.name}/{o.subject_id}.json"
            (run.root / rel).parent.mkdir(parents=True, exist_ok=True)
            persist_model(o.model, run.root / rel)
            run.artifacts.append(rel)
    return result


def summary_table(reports) -> str:
    header = f"{'experiment':40s} {'n':>4s} {'N':>4s} {'|W|':>5s}   " \
             f"{'mu(ACC)':>8s} {'sd(ACC)':>8s} {'mu(FNR)':>8s} {'sd(FNR)':>8s} " \
             f"{'mu(FPR)':>8s} {'sd(FPR)':>8s}"
    lines = [header, "-" * len(header)]
    for name, rep in reports:
        a = rep.aggregate
        lines.append(f"{name:40s} {rep.n:4d} {rep.N:4d} {rep.W:5d}   "
                     + " ".join(f"{a[m][k]:8.3f}" for m in ("ACC", "FNR", "FPR")
                                for k in ("mu", "sigma")))
    return "\n".join(lines) + "\n"


def run_pipeline(config: dict, run_root="runs", overwrite: bool = False) -> Path:
    """Execute the configured stages and return the run directory.

    Raises
    ------
    ConfigInvalid
        Bad config, or the run directory exists and ``overwrite`` is False.
    StageFailure
        A stage failed; ``.stage`` names it and ``.cause`` holds the error.
    """
    cfg = validate_config(config)
    root = run_dir_for(cfg, run_root)
    if root.exists() and not overwrite:
        raise ConfigInvalid("run_root", f"run directory {root} exists (use --overwrite)")
    root.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg, root)

    aligned, dropped, inputs = _load_records(run)
    periods = {ActivityPeriod.parse(x["period"]).value
               for x in cfg["experiments"] + cfg["sweeps"].get("threshold", [])
               + cfg["sweeps"].get("outlier", [])}
    counts = _build_features(run, aligned, periods)
    if run.wants("ingest") or run.wants("synth"):
        run.write("ingest.json", json.dumps(
            {"minutes_retained": int(len(aligned)), "dropped_per_subject": dropped,
             "windows_per_subject": counts}, indent=2, sort_keys=True) + "\n")

    want_models = any(run.wants(s) for s in ("train", "eval", "report"))
    reports = []
    if want_models:
        for item in cfg["experiments"]:
            result = _run_experiment(run, item, probability=False)
            reports.append((result.spec.name, result.report))
            if run.wants("eval"):
                run.write(f"reports/{result.spec.name}.json", result.report.to_json())
                run.write(f"reports/{result.spec.name}.csv", result.report.to_csv())
    else:
        for item in cfg["experiments"]:
            if run.wants("select"):
                run.feature_set(item["approach"], item["combo"], item["period"])

    if run.wants("sweep-threshold"):
        for item in cfg["sweeps"].get("threshold", []):
            result = _run_experiment(run, dict(item, kind="binary"), probability=True)
            stem = f"sweeps/threshold_{result.spec.approach}_{result.spec.combo}_{result.spec.period}"
            rows = result.probability_sweep()
            buf = io.StringIO()
            sweep_to_csv(rows, buf)
            run.write(stem + ".csv", buf.getvalue())
            eer, n_min = result.pooled_eer(probability=True)
            run.write(stem + "_eer.json", json.dumps(
                {"eer": eer.rate, "threshold": eer.threshold, "resolution": 1.0 / n_min},
                indent=2, sort_keys=True) + "\n")

    if run.wants("sweep-outlier"):
        for item in cfg["sweeps"].get("outlier", []):
            period = ActivityPeriod.parse(item["period"]).value
            fs = run.feature_set(item["approach"], item["combo"], period)
            try:
                rows = outlier_sweep(run.features[period], fs, item.get("nu_grid", [0.0]),
                                     run.kernel("unary"), run.train_cfg, run.split)
            except WearAuthError as exc:
                raise StageFailure("sweep-outlier", exc) from exc
            buf = io.StringIO()
            outlier_sweep_to_csv(rows, buf)
            run.write(f"sweeps/outlier_{fs.approach}_{Combo.parse(item['combo']).name}_{period}.csv",
                      buf.getvalue())

    if run.wants("report") and reports:
        run.write("summary.txt", summary_table(reports))

    manifest = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "versions": {"wearauth": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "inputs": inputs,
        "artifacts": {rel: _sha256(root / rel) for rel in sorted(set(run.artifacts))},
        "argv": sys.argv,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root
