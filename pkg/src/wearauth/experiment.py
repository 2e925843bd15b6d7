"""One-model-per-subject authentication experiments.

Glue between the feature matrix, feature selection, SVM training and the
evaluation helpers. Every subject's run is independent and seeded from
``(split.seed, subject_id)``, so results do not depend on the number of
worker processes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .errors import InsufficientWindows
from .evaluation import (DEFAULT_PROBABILITY_GRID, EvalReport, Metrics, OutlierRow, SplitSpec,
                         SubjectResult, SweepRow, aggregate_report, compute_eer,
                         evaluate_scores, make_split, mean_sweep, subject_rng, sweep_scores,
                         sweep_outlier_fraction)
from .features import FeatureMatrix
from .selection import FeatureSetSpec, select_features
from .svm import KernelSpec, TrainConfig, TrainedModel, train_binary, train_unary

log = logging.getLogger(__name__)

KINDS = ("binary", "unary")


@dataclass(frozen=True)
class ExperimentSpec:
    approach: str = "KS"
    combo: str = "CM"
    period: str = "sedentary"
    kind: str = "binary"
    probability: bool = False

    @property
    def name(self) -> str:
        suffix = "_platt" if self.probability else ""
        return f"{self.approach}_{self.combo}_{self.period}_{self.kind}{suffix}"


def cap_windows(fm: FeatureMatrix, cap: int | None, seed: int) -> FeatureMatrix:
    """Keep at most ``cap`` randomly chosen windows per subject (time order
    preserved)."""
    if not cap:
        return fm
    keep = []
    for s, rows in fm.by_subject().items():
        if len(rows) > cap:
            rows = np.sort(subject_rng(seed, s).choice(rows, size=cap, replace=False))
        keep.append(rows)
    return fm.take(np.sort(np.concatenate(keep)))


def select_for(fm: FeatureMatrix, approach: str, combo: str, *, alpha, tau, rho,
               sd_top_k) -> FeatureSetSpec:
    """Global feature set for one approach over ``combo``'s candidate columns."""
    cand = fm.restrict(combo)
    spec = select_features(approach, cand.values, cand.subject_id, cand.names,
                           alpha=alpha, tau=tau, rho=rho, sd_top_k=sd_top_k)
    spec.params["combo"] = str(combo)
    return spec


@dataclass
class SubjectOutcome:
    subject_id: str
    metrics: Metrics
    model: TrainedModel
    pos_scores: np.ndarray
    neg_scores: np.ndarray
    pos_proba: np.ndarray | None = None
    neg_proba: np.ndarray | None = None
    split_sizes: tuple[int, int, int, int] = (0, 0, 0, 0)


def run_subject(X, by_subject, target, kind, kernel, cfg, split_spec,
                probability=False) -> SubjectOutcome:
    split = make_split(by_subject, target, split_spec)
    if kind == "binary":
        Xtr = np.vstack([X[split.train_pos], X[split.train_neg]])
        ytr = np.concatenate([np.ones(len(split.train_pos)), -np.ones(len(split.train_neg))])
        model = train_binary(Xtr, ytr, kernel, cfg, probability=probability)
    elif kind == "unary":
        model = train_unary(X[split.train_pos], kernel, cfg)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    model.subject_id = str(target)
    pos = model.decision_function(X[split.test_pos])
    neg = model.decision_function(X[split.test_neg])
    out = SubjectOutcome(str(target), evaluate_scores(pos, neg, 0.0), model, pos, neg,
                         split_sizes=(len(split.train_pos), len(split.train_neg),
                                      len(split.test_pos), len(split.test_neg)))
    if model.platt is not None:
        out.pos_proba = model.predict_proba(X[split.test_pos])
        out.neg_proba = model.predict_proba(X[split.test_neg])
    return out


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    feature_set: FeatureSetSpec
    report: EvalReport
    outcomes: list[SubjectOutcome] = field(default_factory=list)

    def probability_sweep(self, grid=DEFAULT_PROBABILITY_GRID) -> list[SweepRow]:
        """Subject-averaged ACC/FPR/FNR over probability thresholds."""
        return mean_sweep([sweep_scores(o.pos_proba, o.neg_proba, grid)
                           for o in self.outcomes])

    def pooled_eer(self, probability: bool = True):
        pos = np.concatenate([o.pos_proba if probability else o.pos_scores
                              for o in self.outcomes])
        neg = np.concatenate([o.neg_proba if probability else o.neg_scores
                              for o in self.outcomes])
        return compute_eer(pos, neg), min(len(pos), len(neg))


def _map(fn, items, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def default_kernel(kind: str, gamma: float = 1.0, degree: int = 2) -> KernelSpec:
    return KernelSpec.quadratic(gamma, degree) if kind == "binary" else KernelSpec.gaussian(gamma)


def _try_subject(target, **kw):
    try:
        return run_subject(target=target, **kw)
    except InsufficientWindows:
        return None


def run_experiment(fm: FeatureMatrix, feature_set: FeatureSetSpec, spec: ExperimentSpec,
                   kernel: KernelSpec | None = None, cfg: TrainConfig = TrainConfig(),
                   split_spec: SplitSpec = SplitSpec(), workers: int = 1) -> ExperimentResult:
    """Train and test one model per subject on ``feature_set`` columns."""
    kernel = kernel or default_kernel(spec.kind)
    X = fm.columns(feature_set.selected)
    by_subject = fm.by_subject()
    fn = partial(_try_subject, X=X, by_subject=by_subject, kind=spec.kind, kernel=kernel,
                 cfg=cfg, split_spec=split_spec, probability=spec.probability)
    subjects = list(by_subject)
    outcomes, skipped = [], []
    for s, out in zip(subjects, _map(fn, subjects, workers)):
        if out is None:
            log.warning("skipping subject %s: too few windows", s)
            skipped.append(s)
        else:
            out.model.feature_names = list(feature_set.selected)
            out.model.feature_set = {"approach": feature_set.approach,
                                     "params": dict(feature_set.params)}
            outcomes.append(out)
    per_subject = [SubjectResult(o.subject_id, o.metrics.acc, o.metrics.fpr, o.metrics.fnr)
                   for o in outcomes]
    W = int(round(np.mean([len(by_subject[o.subject_id]) for o in outcomes]))) if outcomes else 0
    result = ExperimentResult(spec, feature_set, None, outcomes)
    eer = None
    if outcomes:
        est, resolution = result.pooled_eer(probability=spec.probability)
        eer = {"rate": est.rate, "threshold": est.threshold,
               "score": "probability" if spec.probability else "decision",
               "resolution": 1.0 / resolution}
    result.report = aggregate_report(
        per_subject, approach=feature_set.approach, combo=spec.combo, period=spec.period,
        kind=spec.kind, n=len(feature_set.selected), W=W, eer=eer, skipped=skipped,
        params={"feature_set": dict(feature_set.params), "kernel": asdict(kernel),
                "train": asdict(cfg), "split": asdict(split_spec)})
    return result


def outlier_sweep(fm: FeatureMatrix, feature_set: FeatureSetSpec, nu_grid,
                  kernel: KernelSpec | None = None, cfg: TrainConfig = TrainConfig(),
                  split_spec: SplitSpec = SplitSpec()) -> list[OutlierRow]:
    """Subject-averaged one-class FPR/FNR per outlier fraction ``nu``."""
    kernel = kernel or KernelSpec.gaussian()
    X = fm.columns(feature_set.selected)
    by_subject = fm.by_subject()
    per_subject = []
    for s in by_subject:
        try:
            split = make_split(by_subject, s, split_spec)
        except InsufficientWindows:
            continue
        per_subject.append(sweep_outlier_fraction(
            X[split.train_pos], X[split.test_pos], X[split.test_neg], nu_grid, kernel, cfg))
    rows = []
    for group in zip(*per_subject):
        rows.append(OutlierRow(group[0].nu, float(np.mean([r.nu_effective for r in group])),
                               *(float(np.mean([getattr(r, a) for r in group]))
                                 for a in ("acc", "fpr", "fnr"))))
    return rows
