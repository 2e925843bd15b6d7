"""Command-line entry point: ``wearauth <subcommand>``.

Exit codes: 0 ok, 2 usage or config error, 3 data error, 4 SMO did not
converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import ActivityPeriod, filter_aligned, parse_records, segment_windows
from .errors import ConfigInvalid, WearAuthError
from .evaluation import (DEFAULT_PROBABILITY_GRID, EvalReport, SplitSpec, SubjectResult,
                         aggregate_report, compute_eer, evaluate_scores, make_split, mean_sweep,
                         outlier_sweep_to_csv, sweep_scores, sweep_to_csv)
from .experiment import cap_windows, default_kernel, outlier_sweep, run_experiment, ExperimentSpec
from .features import FeatureMatrix, feature_matrix
from .persist import load_model, persist_model
from .pipeline import apply_override, run_pipeline, summary_table
from .selection import FeatureSetSpec, select_features
from .svm import KernelSpec, TrainConfig
from .synth import generate_dataset

log = logging.getLogger("wearauth")


def _read_features(path) -> FeatureMatrix:
    with open(path) as fh:
        return FeatureMatrix.read_csv(fh)


def _read_feature_set(path) -> FeatureSetSpec:
    return FeatureSetSpec.from_json(Path(path).read_text())


def cmd_synth(args):
    ds = generate_dataset(args.subjects, args.minutes, args.seed)
    ds.write(args.out, args.profiles)
    print(f"wrote {len(ds.records)} rows for {args.subjects} subjects to {args.out}")


def _ingest(args):
    with open(args.csv) as fh:
        records = parse_records(fh, met_scale=args.met_scale)
    return records, *filter_aligned(records)


def cmd_ingest(args):
    records, aligned, dropped = _ingest(args)
    windows = {p.value: {s: int(len(v)) for s, v in segment_windows(aligned, p).by_subject().items()}
               for p in ActivityPeriod}
    summary = {"rows": len(records), "minutes_retained": len(aligned),
               "dropped_per_subject": dropped, "windows_per_subject": windows}
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_features(args):
    _, aligned, _ = _ingest(args)
    period = ActivityPeriod.parse(args.period)
    fm = feature_matrix(segment_windows(aligned, period), args.combo,
                        include_activity=period is ActivityPeriod.NON_SEDENTARY)
    fm = cap_windows(fm, args.cap, args.seed)
    with open(args.out, "w", newline="") as fh:
        fm.to_csv(fh)
    print(f"wrote {len(fm)} windows x {len(fm.names)} features to {args.out}")


def cmd_select(args):
    fm = _read_features(args.features).restrict(args.combo)
    spec = select_features(args.approach, fm.values, fm.subject_id, fm.names, alpha=args.alpha,
                           tau=args.tau, rho=args.rho, sd_top_k=args.top_k)
    spec.params["combo"] = args.combo.upper()
    Path(args.out).write_text(spec.to_json() + "\n")
    print(f"{spec.approach}: kept {len(spec.selected)} of {len(fm.names)} features")


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(C=args.C, nu=args.nu, tol=args.tol, seed=args.seed)


def _kernel(args) -> KernelSpec:
    return default_kernel(args.kind, args.gamma)


def cmd_train(args):
    fm = _read_features(args.features)
    fs = _read_feature_set(args.feature_set)
    spec = ExperimentSpec(fs.approach, fs.params.get("combo", "?"), args.period, args.kind,
                          probability=args.probability)
    split = SplitSpec(seed=args.seed)
    result = run_experiment(fm, fs, spec, _kernel(args), _train_cfg(args), split)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for o in result.outcomes:
        o.model.info["split"] = {"train_fraction": split.train_fraction, "seed": split.seed,
                                 "balanced": split.balanced,
                                 "chronological": split.chronological,
                                 "min_windows": split.min_windows}
        persist_model(o.model, out / f"{o.subject_id}.json")
    print(f"trained {len(result.outcomes)} models into {out}")


def _scored(args):
    """Load models and rebuild each subject's held-out test sets."""
    fm = _read_features(args.features)
    by_subject = fm.by_subject()
    for path in sorted(Path(args.models).glob("*.json")):
        model = load_model(path)
        split = make_split(by_subject, model.subject_id, SplitSpec(**model.info["split"]))
        X = fm.columns(model.feature_names)
        model.info["n_windows"] = len(by_subject[model.subject_id])
        yield model, X[split.test_pos], X[split.test_neg]


def cmd_eval(args):
    per_subject, models = [], []
    pos_all, neg_all = [], []
    for model, Xp, Xn in _scored(args):
        pos, neg = model.decision_function(Xp), model.decision_function(Xn)
        m = evaluate_scores(pos, neg, args.threshold)
        per_subject.append(SubjectResult(model.subject_id, m.acc, m.fpr, m.fnr))
        pos_all.append(pos)
        neg_all.append(neg)
        models.append(model)
    if not models:
        raise WearAuthError(f"no models found in {args.models}")
    pos, neg = np.concatenate(pos_all), np.concatenate(neg_all)
    eer = compute_eer(pos, neg)
    fs = models[0].feature_set or {}
    report = aggregate_report(
        per_subject, approach=fs.get("approach", "?"), combo=fs.get("params", {}).get("combo", "?"),
        period=args.period, kind=models[0].kind, n=len(models[0].feature_names),
        W=int(round(np.mean([m.info["n_windows"] for m in models]))),
        eer={"rate": eer.rate, "threshold": eer.threshold, "score": "decision",
             "resolution": 1.0 / min(len(pos), len(neg))})
    Path(args.out + ".json").write_text(report.to_json())
    Path(args.out + ".csv").write_text(report.to_csv())
    a = report.aggregate
    print(f"N={report.N} ACC={a['ACC']['mu']:.3f} FPR={a['FPR']['mu']:.3f} "
          f"FNR={a['FNR']['mu']:.3f} EER={eer.rate:.3f}")


def cmd_sweep_threshold(args):
    grid = np.round(np.arange(0, 1 + args.step / 2, args.step), 10) if args.step \
        else DEFAULT_PROBABILITY_GRID
    sweeps = []
    for model, Xp, Xn in _scored(args):
        sweeps.append(sweep_scores(model.predict_proba(Xp), model.predict_proba(Xn), grid))
    if not sweeps:
        raise WearAuthError(f"no models found in {args.models}")
    with open(args.out, "w", newline="") as fh:
        sweep_to_csv(mean_sweep(sweeps), fh)
    print(f"wrote {len(grid)} thresholds averaged over {len(sweeps)} subjects to {args.out}")


def cmd_sweep_outlier(args):
    fm = _read_features(args.features)
    fs = _read_feature_set(args.feature_set)
    nu_grid = [float(v) for v in args.nu.split(",")]
    rows = outlier_sweep(fm, fs, nu_grid, KernelSpec.gaussian(args.gamma),
                         TrainConfig(tol=args.tol, seed=args.seed), SplitSpec(seed=args.seed))
    with open(args.out, "w", newline="") as fh:
        outlier_sweep_to_csv(rows, fh)
    print(f"wrote {len(rows)} rows to {args.out}")


def cmd_report(args):
    paths = sorted(Path(args.run).glob("reports/*.json")) if args.run else []
    paths += [Path(p) for p in args.reports]
    if not paths:
        raise ConfigInvalid("reports", "no report files given")
    reports = [(p.stem, EvalReport.from_dict(json.loads(p.read_text()))) for p in paths]
    sys.stdout.write(summary_table(reports))


def cmd_run(args):
    config = json.loads(Path(args.config).read_text()) if args.config else {}
    for assignment in args.set:
        config = apply_override(config, assignment)
    if args.workers:
        config["workers"] = args.workers
    root = run_pipeline(config, args.run_root, overwrite=args.overwrite)
    print(root)
    summary = root / "summary.txt"
    if summary.exists():
        sys.stdout.write(summary.read_text())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wearauth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("--csv", required=True, help="minute-level biometric CSV")
        p.add_argument("--met-scale", type=float, default=1.0,
                       help="multiply the met column by this (0.1 for MET x 10 exports)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--minutes", type=int, default=20160)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--profiles", help="profiles sidecar (default: profiles.json next to --out)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate, align and summarise a CSV")
    data_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="window a CSV and write the feature matrix")
    data_args(p)
    p.add_argument("--period", default="sedentary")
    p.add_argument("--combo", default="CSMH")
    p.add_argument("--cap", type=int, default=300, help="max windows per subject (0: no cap)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("select", help="run KS, PC or SD feature selection")
    p.add_argument("--features", required=True)
    p.add_argument("--approach", choices=["KS", "PC", "SD"], type=str.upper, default="KS")
    p.add_argument("--combo", default="CM")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    def model_args(p):
        p.add_argument("--kind", choices=["binary", "unary"], default="binary")
        p.add_argument("--C", type=float, default=1.0)
        p.add_argument("--gamma", type=float, default=1.0)
        p.add_argument("--nu", type=float, default=0.0)
        p.add_argument("--tol", type=float, default=1e-3)
        p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("train", help="train one model per subject")
    p.add_argument("--features", required=True)
    p.add_argument("--feature-set", required=True)
    p.add_argument("--period", default="sedentary")
    p.add_argument("--probability", action="store_true", help="fit Platt calibration")
    model_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    def scored_args(p):
        p.add_argument("--features", required=True)
        p.add_argument("--models", required=True, help="directory of model JSON files")

    p = sub.add_parser("eval", help="evaluate trained models on their held-out windows")
    scored_args(p)
    p.add_argument("--period", default="sedentary")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--out", required=True, help="output prefix for .json and .csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-threshold", help="ACC/FPR/FNR over probability thresholds")
    scored_args(p)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_threshold)

    p = sub.add_parser("sweep-outlier", help="one-class FPR/FNR over outlier fractions")
    p.add_argument("--features", required=True)
    p.add_argument("--feature-set", required=True)
    p.add_argument("--nu", default="0,0.05,0.1,0.2,0.3,0.5")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_outlier)

    p = sub.add_parser("report", help="print a summary table of evaluation reports")
    p.add_argument("--run", help="run directory")
    p.add_argument("reports", nargs="*")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run the configured pipeline")
    p.add_argument("--config", help="JSON config (defaults used when omitted)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. --set synth.n_subjects=10")
    p.add_argument("--run-root", default="runs")
    p.add_argument("--workers", type=int)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except WearAuthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
