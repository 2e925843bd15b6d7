"""Per-subject train/test splits, error rates, EER and threshold sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyResults, EmptyScores, EmptyTestSet, InsufficientWindows
from .svm import KernelSpec, TrainConfig, TrainedModel, effective_nu, train_unary

MIN_WINDOWS = 8
DEFAULT_PROBABILITY_GRID = np.round(np.arange(0, 101) / 100, 2)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    seed: int = 0
    balanced: bool = True
    chronological: bool = False
    min_windows: int = MIN_WINDOWS

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")


@dataclass
class Split:
    train_pos: np.ndarray
    train_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray


def subject_rng(seed: int, subject: str) -> np.random.Generator:
    """Generator keyed on the run seed and the subject id (process-stable)."""
    return np.random.default_rng([int(seed), zlib.crc32(str(subject).encode())])


def _allocate(available: np.ndarray, k: int, rng) -> np.ndarray:
    """Spread ``k`` draws as evenly as possible over pools of the given
    sizes; the remainder goes to randomly chosen pools with spare room."""
    alloc = np.zeros(len(available), dtype=int)
    remaining = k
    while remaining > 0:
        room = np.flatnonzero(alloc < available)
        if len(room) == 0:
            raise ValueError(f"cannot draw {k} impostor windows from {available.sum()}")
        share = remaining // len(room)
        if share == 0:
            alloc[rng.choice(room, size=remaining, replace=False)] += 1
            break
        add = np.minimum(share, available[room] - alloc[room])
        alloc[room] += add
        remaining -= int(add.sum())
    return alloc


def make_split(windows_by_subject: Mapping[str, Sequence[int]], target: str,
               spec: SplitSpec = SplitSpec()) -> Split:
    """Build the positive/negative train and test sets for one subject.

    The target's windows are split ``train_fraction`` / rest (seeded
    shuffle, or in the given order when ``spec.chronological``). Negatives
    come from every other subject, drawn without replacement and spread
    evenly across impostors so their counts match the positive train and
    test sizes (``spec.balanced``).

    Raises
    ------
    InsufficientWindows
        If the target has fewer than ``spec.min_windows`` windows.
    """
    own = np.asarray(windows_by_subject[target])
    if len(own) < spec.min_windows:
        raise InsufficientWindows(target, len(own), spec.min_windows)
    rng = subject_rng(spec.seed, target)
    if not spec.chronological:
        own = rng.permutation(own)
    n_train = int(math.floor(spec.train_fraction * len(own)))
    train_pos, test_pos = own[:n_train], own[n_train:]

    others = [s for s in sorted(windows_by_subject) if s != target]
    pools = [np.asarray(windows_by_subject[s]) for s in others]
    if not spec.chronological:
        pools = [rng.permutation(p) for p in pools]
    if not spec.balanced:
        cut = [int(math.floor(spec.train_fraction * len(p))) for p in pools]
        return Split(train_pos, np.concatenate([p[:c] for p, c in zip(pools, cut)]),
                     test_pos, np.concatenate([p[c:] for p, c in zip(pools, cut)]))

    sizes = np.array([len(p) for p in pools])
    n_train_neg = _allocate(sizes, len(train_pos), rng)
    n_test_neg = _allocate(sizes - n_train_neg, len(test_pos), rng)
    train_neg = np.concatenate([p[:a] for p, a in zip(pools, n_train_neg)])
    test_neg = np.concatenate([p[a:a + b] for p, a, b in zip(pools, n_train_neg, n_test_neg)])
    return Split(train_pos, train_neg.astype(own.dtype), test_pos, test_neg.astype(own.dtype))


@dataclass(frozen=True)
class Metrics:
    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def acc(self) -> float:
        return (self.tp + self.tn) / (self.tp + self.fn + self.tn + self.fp)

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn)

    @property
    def fnr(self) -> float:
        return self.fn / (self.fn + self.tp)

    def as_dict(self) -> dict:
        return {"ACC": self.acc, "FPR": self.fpr, "FNR": self.fnr}


def evaluate_scores(pos_scores, neg_scores, threshold: float = 0.0) -> Metrics:
    """Error counts when ``score >= threshold`` means "genuine user"."""
    pos = np.asarray(pos_scores, dtype=float)
    neg = np.asarray(neg_scores, dtype=float)
    if pos.size == 0 or neg.size == 0:
        raise EmptyTestSet("need genuine and impostor test scores")
    tp = int((pos >= threshold).sum())
    fp = int((neg >= threshold).sum())
    return Metrics(tp=tp, fn=pos.size - tp, tn=neg.size - fp, fp=fp)


def evaluate_model(model: TrainedModel, X_pos, X_neg, threshold: float = 0.0,
                   probability: bool = False) -> Metrics:
    """ACC/FPR/FNR of ``model`` on genuine (``X_pos``) and impostor windows,
    thresholding decision values or, with ``probability``, Platt
    probabilities."""
    if len(X_pos) == 0 or len(X_neg) == 0:
        raise EmptyTestSet("need genuine and impostor test windows")
    score = model.predict_proba if probability else model.decision_function
    return evaluate_scores(score(X_pos), score(X_neg), threshold)


@dataclass(frozen=True)
class EER:
    rate: float
    threshold: float


def error_curves(pos_scores, neg_scores, thresholds):
    """FNR and FPR at each threshold (accept when ``score >= t``)."""
    pos = np.sort(np.asarray(pos_scores, dtype=float))
    neg = np.sort(np.asarray(neg_scores, dtype=float))
    t = np.asarray(thresholds, dtype=float)
    fnr = np.searchsorted(pos, t, side="left") / pos.size
    fpr = 1.0 - np.searchsorted(neg, t, side="left") / neg.size
    return fnr, fpr


def compute_eer(pos_scores, neg_scores) -> EER:
    """Equal error rate by sweeping thresholds over the pooled scores.

    Candidate thresholds are the midpoints between consecutive distinct
    scores plus one below and one above all scores. FNR - FPR is
    non-decreasing along them; the crossing is located by linear
    interpolation between the two bracketing candidates. When FNR equals
    FPR over a stretch of candidates, the middle of that stretch is
    reported.
    """
    pos = np.asarray(pos_scores, dtype=float)
    neg = np.asarray(neg_scores, dtype=float)
    if pos.size == 0 or neg.size == 0:
        raise EmptyScores("need genuine and impostor scores")
    values = np.unique(np.concatenate([pos, neg]))
    span = max(values[-1] - values[0], 1.0)
    cand = np.concatenate([[values[0] - span], (values[1:] + values[:-1]) / 2,
                           [values[-1] + span]])
    fnr, fpr = error_curves(pos, neg, cand)
    d = fnr - fpr
    zero = np.flatnonzero(d == 0)
    if zero.size:
        lo, hi = zero[0], zero[-1]
        return EER(float(fnr[lo]), float((cand[lo] + cand[hi]) / 2))
    k = int(np.flatnonzero(d > 0)[0])  # d[0] = -1 < 0 < d[-1] = 1
    w = -d[k - 1] / (d[k] - d[k - 1])
    rate = fnr[k - 1] + w * (fnr[k] - fnr[k - 1])
    return EER(float(rate), float(cand[k - 1] + w * (cand[k] - cand[k - 1])))


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    acc: float
    fpr: float
    fnr: float


def sweep_scores(pos_scores, neg_scores, grid) -> list[SweepRow]:
    rows = []
    for t in sorted(float(g) for g in grid):
        m = evaluate_scores(pos_scores, neg_scores, t)
        rows.append(SweepRow(t, m.acc, m.fpr, m.fnr))
    return rows


def sweep_probability_threshold(model: TrainedModel, X_pos, X_neg,
                                grid=DEFAULT_PROBABILITY_GRID) -> list[SweepRow]:
    """ACC/FPR/FNR across probability thresholds (Platt calibration needed)."""
    return sweep_scores(model.predict_proba(X_pos), model.predict_proba(X_neg), grid)


def mean_sweep(sweeps: Sequence[Sequence[SweepRow]]) -> list[SweepRow]:
    """Average several sweeps that share one threshold grid."""
    if not sweeps:
        raise EmptyResults("no sweeps to average")
    out = []
    for rows in zip(*sweeps):
        out.append(SweepRow(rows[0].threshold, *(float(np.mean([getattr(r, a) for r in rows]))
                                                 for a in ("acc", "fpr", "fnr"))))
    return out


def sweep_to_csv(rows: Sequence[SweepRow], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["threshold", "ACC", "FPR", "FNR"])
    for r in rows:
        w.writerow([repr(r.threshold), repr(r.acc), repr(r.fpr), repr(r.fnr)])


@dataclass(frozen=True)
class OutlierRow:
    nu: float
    nu_effective: float
    acc: float
    fpr: float
    fnr: float


def sweep_outlier_fraction(X_train, X_pos, X_neg, nu_grid,
                           kernel: KernelSpec = KernelSpec.gaussian(),
                           cfg: TrainConfig = TrainConfig()) -> list[OutlierRow]:
    """Train a one-class model per ``nu`` and score held-out windows.

    ``nu = 0`` stands for "no training outliers" and is run as ``1/m``.
    """
    m = len(X_train)
    rows = []
    for nu in sorted(float(v) for v in nu_grid):
        model = train_unary(X_train, kernel, _with_nu(cfg, nu))
        met = evaluate_model(model, X_pos, X_neg)
        rows.append(OutlierRow(nu, effective_nu(nu, m), met.acc, met.fpr, met.fnr))
    return rows


def _with_nu(cfg: TrainConfig, nu: float) -> TrainConfig:
    return TrainConfig(**{**asdict(cfg), "nu": nu})


def outlier_sweep_to_csv(rows: Sequence[OutlierRow], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["nu", "nu_effective", "ACC", "FPR", "FNR"])
    for r in rows:
        w.writerow([repr(r.nu), repr(r.nu_effective), repr(r.acc), repr(r.fpr), repr(r.fnr)])


# --- reporting --------------------------------------------------------------

METRICS = ("ACC", "FPR", "FNR")


@dataclass
class SubjectResult:
    subject_id: str
    ACC: float
    FPR: float
    FNR: float


@dataclass
class EvalReport:
    """Per-subject error rates and their mean/std, with the feature count
    ``n``, subject count ``N`` and windows per subject ``W``."""

    approach: str
    combo: str
    period: str
    kind: str
    n: int
    N: int
    W: int
    per_subject: list[SubjectResult]
    aggregate: dict[str, dict[str, float]]
    sigma_defined: bool = True
    eer: dict | None = None
    params: dict = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        doc = dict(doc)
        doc["per_subject"] = [SubjectResult(**r) for r in doc["per_subject"]]
        return cls(**doc)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subject_id", *METRICS])
        for r in self.per_subject:
            w.writerow([r.subject_id, *(repr(getattr(r, m)) for m in METRICS)])
        w.writerow(["mean", *(repr(self.aggregate[m]["mu"]) for m in METRICS)])
        w.writerow(["std", *(repr(self.aggregate[m]["sigma"]) for m in METRICS)])
        return buf.getvalue()


def aggregate_report(per_subject: Sequence[SubjectResult], *, approach: str, combo: str,
                     period: str, kind: str, n: int, W: int, eer: dict | None = None,
                     params: dict | None = None, skipped=()) -> EvalReport:
    """Mean and sample standard deviation (ddof=1) of each metric.

    With a single subject the deviation is undefined; it is reported as 0
    and ``sigma_defined`` is False.
    """
    per_subject = list(per_subject)
    if not per_subject:
        raise EmptyResults("no per-subject results to aggregate")
    agg = {}
    for m in METRICS:
        values = np.array([getattr(r, m) for r in per_subject])
        sigma = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        agg[m] = {"mu": float(values.mean()), "sigma": sigma}
    return EvalReport(approach=approach, combo=combo, period=period, kind=kind, n=int(n),
                      N=len(per_subject), W=int(W), per_subject=per_subject, aggregate=agg,
                      sigma_defined=len(per_subject) > 1, eer=eer, params=dict(params or {}),
                      skipped=list(skipped))
