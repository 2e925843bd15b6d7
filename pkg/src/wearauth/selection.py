"""Feature selection: KS significance, Pearson redundancy pruning, SD ranking.

The KS step produces a global feature set from one-vs-rest two-sample tests
(each subject's windows against everyone else's). The PC and SD steps only
ever shrink the KS set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySample, NoFeatureSurvives, TopKExceedsAvailable

APPROACHES = ("KS", "PC", "SD")

DEFAULT_ALPHA = 0.05
DEFAULT_TAU = 0.5
DEFAULT_RHO = 0.9
DEFAULT_SD_TOP_K = {"sedentary": 20, "non_sedentary": 30}


@dataclass
class FeatureSetSpec:
    approach: str
    selected: list[str]
    params: dict = field(default_factory=dict)
    # per-feature evidence: KS significance counts, or SD spread scores
    scores: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"approach": self.approach, "params": self.params,
                           "selected": self.selected, "scores": self.scores},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeatureSetSpec":
        doc = json.loads(text)
        return cls(doc["approach"], list(doc["selected"]), doc.get("params", {}),
                   doc.get("scores", {}))


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a(x) - F_b(x)|``."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    points = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, points, side="right") / a.size
    cdf_b = np.searchsorted(b, points, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def kolmogorov_q(lam: float, eps: float = 1e-12) -> float:
    """Kolmogorov survival function ``2 sum (-1)^(j-1) exp(-2 j^2 lam^2)``,
    summed until a term drops below ``eps`` and clamped to [0, 1].

    Below ``lam = 1`` the alternating sum cancels badly, so the equivalent
    theta-function form ``1 - sqrt(2 pi)/lam sum exp(-(2k-1)^2 pi^2 / (8 lam^2))``
    is used instead.
    """
    if lam <= 0:
        return 1.0
    total, j = 0.0, 1
    if lam < 1.0:
        c = math.pi ** 2 / (8.0 * lam * lam)
        while True:
            term = math.exp(-(2 * j - 1) ** 2 * c)
            total += term
            if term < eps * total or term == 0.0:
                break
            j += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * total))
    while True:
        term = math.exp(-2.0 * j * j * lam * lam)
        total += term if j % 2 else -term
        if term < eps:
            break
        j += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_pvalue(d: float, n1: int, n2: int) -> float:
    """Asymptotic two-sided p-value of the two-sample KS statistic ``d``."""
    ne = n1 * n2 / (n1 + n2)
    root = math.sqrt(ne)
    return kolmogorov_q((root + 0.12 + 0.11 / root) * d)


def one_vs_rest_ks(X, subjects) -> tuple[list, np.ndarray, np.ndarray]:
    """KS statistic of every (subject, feature) against all other subjects.

    Returns ``(subject_list, D, counts)`` where ``D`` has shape
    ``(n_subjects, n_features)`` and ``counts`` is the window count of each
    subject.
    """
    X = np.asarray(X, dtype=float)
    subjects = np.asarray(subjects)
    labels, codes = np.unique(subjects, return_inverse=True)
    n, p = X.shape
    onehot = np.zeros((n, len(labels)))
    onehot[np.arange(n), codes] = 1.0
    counts = onehot.sum(axis=0)
    rest = n - counts
    D = np.zeros((len(labels), p))
    for j in range(p):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cum = np.cumsum(onehot[order], axis=0)
        # evaluate both ECDFs only after the last of a run of tied values
        last = np.append(xs[1:] != xs[:-1], True)
        cum = cum[last]
        total = np.flatnonzero(last) + 1.0
        own = cum / counts
        other = (total[:, None] - cum) / rest
        D[:, j] = np.abs(own - other).max(axis=0)
    return labels.tolist(), D, counts.astype(int)


def select_ks(X, subjects, names=None, alpha: float = DEFAULT_ALPHA,
              tau: float = DEFAULT_TAU) -> FeatureSetSpec:
    """Keep features that separate at least a ``tau`` fraction of subjects.

    For every feature and subject a one-vs-rest KS test is run; the feature
    survives when ``p < alpha`` for at least ``tau`` of the subjects.

    Raises
    ------
    NoFeatureSurvives
        If no feature meets the rule.
    """
    X = np.asarray(X, dtype=float)
    names = list(names) if names is not None else [f"f{j}" for j in range(X.shape[1])]
    labels, D, counts = one_vs_rest_ks(X, subjects)
    if len(labels) < 2:
        raise ValueError("KS selection needs at least two subjects")
    n = len(X)
    pvals = np.array([[ks_pvalue(D[s, j], counts[s], n - counts[s])
                       for j in range(D.shape[1])] for s in range(len(labels))])
    significant = (pvals < alpha).sum(axis=0)
    need = tau * len(labels)
    selected = [name for name, k in zip(names, significant) if k >= need - 1e-12]
    if not selected:
        raise NoFeatureSurvives(f"no feature has p < {alpha} for {tau:.0%} of subjects")
    return FeatureSetSpec("KS", selected, {"alpha": alpha, "tau": tau},
                          {name: int(k) for name, k in zip(names, significant)})


def pearson_matrix(X) -> np.ndarray:
    """Absolute Pearson correlation between columns; zero-variance columns
    correlate 0 with everything (including themselves)."""
    X = np.asarray(X, dtype=float)
    centered = X - X.mean(axis=0)
    sd = np.sqrt((centered ** 2).sum(axis=0) / (len(X) - 1))
    cov = centered.T @ centered / (len(X) - 1)
    denom = np.outer(sd, sd)
    r = np.zeros_like(cov)
    np.divide(cov, denom, out=r, where=denom > 0)
    return np.clip(np.abs(r), 0.0, 1.0)


def prune_pearson(X, names, kept: FeatureSetSpec, rho: float = DEFAULT_RHO) -> FeatureSetSpec:
    """Drop redundant members of highly correlated feature pairs.

    Pairs are visited in descending ``|r|``; for each pair still intact with
    ``|r| > rho`` the feature with fewer KS-significant subjects is dropped
    (ties drop the one later in ``kept.selected``).
    """
    index = {n: i for i, n in enumerate(names)}
    cols = kept.selected
    r = pearson_matrix(np.asarray(X, dtype=float)[:, [index[n] for n in cols]])
    iu, ju = np.triu_indices(len(cols), k=1)
    strength = r[iu, ju]
    order = np.lexsort((ju, iu, -strength))
    alive = np.ones(len(cols), dtype=bool)
    count = [kept.scores.get(n, 0) for n in cols]
    for k in order:
        if strength[k] <= rho:
            break
        i, j = iu[k], ju[k]
        if not (alive[i] and alive[j]):
            continue
        # i precedes j canonically, so j loses ties
        alive[i if count[i] < count[j] else j] = False
    selected = [n for n, a in zip(cols, alive) if a]
    params = dict(kept.params, rho=rho)
    return FeatureSetSpec("PC", selected, params, {n: kept.scores.get(n, 0) for n in selected})


def sd_scores(X, subjects) -> np.ndarray:
    """Between-subject spread: std (ddof=1) of per-subject means of the
    z-normalised columns of ``X``."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0, ddof=1) if len(X) > 1 else np.zeros(X.shape[1])
    Z = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    subjects = np.asarray(subjects)
    means = np.array([Z[subjects == s].mean(axis=0) for s in np.unique(subjects)])
    if len(means) < 2:
        return np.zeros(X.shape[1])
    return means.std(axis=0, ddof=1)


def select_sd(X, subjects, names, kept: FeatureSetSpec, top_k: int,
              strict: bool = True) -> FeatureSetSpec:
    """Keep the ``top_k`` KS-selected features with the largest
    between-subject spread.

    With ``strict=False`` a ``top_k`` larger than the kept set returns the
    whole set instead of raising :class:`TopKExceedsAvailable`.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    cols = kept.selected
    if top_k > len(cols):
        if strict:
            raise TopKExceedsAvailable(f"top_k={top_k} but only {len(cols)} features kept")
        top_k = len(cols)
    index = {n: i for i, n in enumerate(names)}
    scores = sd_scores(np.asarray(X, dtype=float)[:, [index[n] for n in cols]], subjects)
    order = np.argsort(-scores, kind="stable")[:top_k]
    params = dict(kept.params, sd_top_k=top_k)
    return FeatureSetSpec("SD", [cols[i] for i in order], params,
                          {cols[i]: float(scores[i]) for i in order})


def select_features(approach: str, X, subjects, names, alpha=DEFAULT_ALPHA,
                    tau=DEFAULT_TAU, rho=DEFAULT_RHO, sd_top_k=20) -> FeatureSetSpec:
    """Run one of the three approaches end to end (PC and SD start from KS)."""
    approach = approach.upper()
    if approach not in APPROACHES:
        raise ValueError(f"unknown approach {approach!r}")
    ks = select_ks(X, subjects, names, alpha=alpha, tau=tau)
    if approach == "KS":
        return ks
    if approach == "PC":
        return prune_pearson(X, names, ks, rho=rho)
    return select_sd(X, subjects, names, ks, sd_top_k, strict=False)
