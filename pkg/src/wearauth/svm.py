"""Support vector machines trained with sequential minimal optimisation.

Both models reduce to the same box- and equality-constrained quadratic
program::

    min_a  1/2 a'Qa + p'a   s.t.  y'a = const,  0 <= a_i <= C_i

* binary soft-margin SVM: ``Q_ij = y_i y_j K_ij``, ``p = -1``, ``C_i = C``;
* one-class nu-SVM: ``Q = K``, ``p = 0``, ``y = 1``, ``C_i = 1/(nu m)``,
  ``sum a = 1``.

:func:`solve_qp` works on that form with maximal-violating-pair selection
refined by second-order gain (Fan, Chen & Lin, JMLR 2005).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .errors import (DimensionMismatch, NoConvergence, NonFinite, PlattNotFitted,
                     SingleClass)

TAU = 1e-12

POLY = "quadratic_poly"
RBF = "gaussian_rbf"


@dataclass(frozen=True)
class KernelSpec:
    kind: str = POLY
    gamma: float = 1.0
    degree: int = 2

    def __post_init__(self):
        if self.kind not in (POLY, RBF):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @classmethod
    def quadratic(cls, gamma=1.0, degree=2):
        return cls(POLY, gamma, degree)

    @classmethod
    def gaussian(cls, gamma=1.0):
        return cls(RBF, gamma, 0)


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    nu: float = 0.0        # <= 1/m means "no outliers": the smallest admissible nu
    tol: float = 1e-3
    max_passes: int = 10_000  # iteration cap is max_passes * n_samples
    seed: int = 0
    normalize: bool = True
    platt_folds: int = 3

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 <= self.nu <= 1:
            raise ValueError("nu must be in [0, 1]")


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Kernel value for a single pair of vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch(f"{x.shape} vs {y.shape}")
    if spec.kind == POLY:
        return float((1.0 + spec.gamma * np.dot(x, y)) ** spec.degree)
    return float(math.exp(-spec.gamma * np.sum((x - y) ** 2)))


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and ``B`` (default ``A``)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"{A.shape[1]} vs {B.shape[1]} features")
    dot = A @ B.T
    if spec.kind == POLY:
        return (1.0 + spec.gamma * dot) ** spec.degree
    sq = (A ** 2).sum(axis=1)[:, None] + (B ** 2).sum(axis=1)[None, :] - 2.0 * dot
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


@numba.njit(cache=True)
def _smo(Q, p, y, C, alpha, eps, max_iter):
    n = p.shape[0]
    G = p + Q @ alpha
    it = 0
    while True:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C[t] and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            elif alpha[t] > 0 and G[t] >= gmax:
                gmax = G[t]
                i = t
        # j: second-order choice in I_low
        gmax2 = -np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if y[t] > 0:
                if alpha[t] > 0:
                    diff = gmax + G[t]
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    if diff > 0 and i >= 0:
                        quad = Q[i, i] + Q[t, t] - 2.0 * y[i] * Q[i, t]
                        obj = -diff * diff / (quad if quad > 0 else TAU)
                        if obj <= best:
                            best = obj
                            j = t
            elif alpha[t] < C[t]:
                diff = gmax - G[t]
                if -G[t] >= gmax2:
                    gmax2 = -G[t]
                if diff > 0 and i >= 0:
                    quad = Q[i, i] + Q[t, t] + 2.0 * y[i] * Q[i, t]
                    obj = -diff * diff / (quad if quad > 0 else TAU)
                    if obj <= best:
                        best = obj
                        j = t
        if gmax + gmax2 < eps or j == -1:
            return G, it, gmax + gmax2, True
        if it >= max_iter:
            return G, it, gmax + gmax2, False
        it += 1

        Ci = C[i]
        Cj = C[j]
        ai = alpha[i]
        aj = alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] = ai + delta
            alpha[j] = aj + delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > Ci - Cj:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = Ci - diff
            elif alpha[j] > Cj:
                alpha[j] = Cj
                alpha[i] = Cj + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            alpha[i] = ai - delta
            alpha[j] = aj + delta
            if total > Ci:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = total - Ci
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
            if total > Cj:
                if alpha[j] > Cj:
                    alpha[j] = Cj
                    alpha[i] = total - Cj
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total
        dai = alpha[i] - ai
        daj = alpha[j] - aj
        for k in range(n):
            G[k] += Q[i, k] * dai + Q[j, k] * daj


@dataclass
class QPResult:
    alpha: np.ndarray
    rho: float
    objective: float
    iterations: int
    gap: float


def _rho(G, y, alpha, C):
    yG = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~upper & ~lower
    if free.any():
        return float(yG[free].mean())
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def solve_qp(Q, p, y, C, alpha0, tol=1e-3, max_iter=100_000) -> QPResult:
    """Minimise ``1/2 a'Qa + p'a`` subject to ``y'a = y'alpha0`` and
    ``0 <= a <= C`` starting from the feasible point ``alpha0``.

    Stops when the maximal KKT violation ``m(a) - M(a)`` drops below
    ``tol``; raises :class:`NoConvergence` after ``max_iter`` updates.
    """
    Q = np.ascontiguousarray(Q, dtype=float)
    p = np.ascontiguousarray(p, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    C = np.ascontiguousarray(np.broadcast_to(C, p.shape), dtype=float)
    alpha = np.array(alpha0, dtype=float)
    G, iterations, gap, converged = _smo(Q, p, y, C, alpha, float(tol), int(max_iter))
    if not converged:
        raise NoConvergence(f"SMO stopped after {iterations} iterations, gap {gap:.3g}")
    objective = float(alpha @ (G + p)) / 2
    return QPResult(alpha, _rho(G, y, alpha, C), objective, iterations, gap)


@dataclass
class TrainedModel:
    """A fitted binary or one-class SVM.

    ``support_vectors`` are stored in normalised coordinates; inputs to
    :meth:`decision_function` are raw and normalised with ``norm_mean`` /
    ``norm_std`` first. The decision value is
    ``sum(alphas * labels * K(sv, x)) + intercept``, so for the binary
    model ``intercept`` is the bias ``b`` and for the one-class model it is
    ``-rho``.
    """

    kind: str
    kernel: KernelSpec
    support_vectors: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    intercept: float
    norm_mean: np.ndarray
    norm_std: np.ndarray
    platt: tuple[float, float] | None = None
    feature_names: list[str] = field(default_factory=list)
    feature_set: dict | None = None
    subject_id: str = ""
    config: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.norm_mean)

    @property
    def bias(self) -> float:
        return self.intercept

    @property
    def rho(self) -> float:
        return -self.intercept

    def normalize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model has {self.n_features} features, got {X.shape[1]}")
        return (X - self.norm_mean) / self.norm_std

    def decision_function(self, X) -> np.ndarray:
        K = gram(self.kernel, self.normalize(X), self.support_vectors)
        return K @ (self.alphas * self.labels) + self.intercept

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def predict_proba(self, X) -> np.ndarray:
        if self.platt is None:
            raise PlattNotFitted("model has no Platt calibration")
        return platt_probability(self.decision_function(X), *self.platt)


def decision_value(model: TrainedModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("expected a single feature vector")
    return float(model.decision_function(x[None, :])[0])


def predict_proba(model: TrainedModel, x) -> float:
    return float(model.predict_proba(np.asarray(x, dtype=float)[None, :])[0])


def _norm_stats(X, normalize):
    if not normalize:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def _check_finite(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.isfinite(X).all():
        raise NonFinite("training data contains NaN or inf")
    return X


def _config_echo(cfg: TrainConfig) -> dict:
    return {"C": cfg.C, "nu": cfg.nu, "tol": cfg.tol, "max_passes": cfg.max_passes,
            "seed": cfg.seed, "normalize": cfg.normalize, "platt_folds": cfg.platt_folds}


def train_binary(X, y, kernel: KernelSpec = KernelSpec(), cfg: TrainConfig = TrainConfig(),
                 probability: bool = False) -> TrainedModel:
    """Soft-margin binary SVM.

    Parameters
    ----------
    X : array_like, shape (m, d)
    y : array_like of {-1, +1}, shape (m,)
    kernel : KernelSpec
        Defaults to the quadratic kernel ``(1 + x'y)**2``.
    cfg : TrainConfig
    probability : bool
        Also fit a Platt sigmoid on out-of-fold decision values
        (``cfg.platt_folds`` seeded, class-stratified folds).

    Raises
    ------
    SingleClass, NonFinite, NoConvergence
    """
    X = _check_finite(X)
    y = np.asarray(y, dtype=float)
    if len(y) != len(X):
        raise DimensionMismatch("X and y lengths differ")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValueError("labels must be -1 or +1")
    if (y > 0).all() or (y < 0).all():
        raise SingleClass("binary training needs both classes")
    mean, std = _norm_stats(X, cfg.normalize)
    Z = (X - mean) / std
    K = gram(kernel, Z)
    m = len(y)
    res = solve_qp(K * np.outer(y, y), -np.ones(m), y, cfg.C, np.zeros(m),
                   tol=cfg.tol, max_iter=cfg.max_passes * m)
    sv = res.alpha > 0
    model = TrainedModel(
        kind="binary", kernel=kernel, support_vectors=Z[sv], alphas=res.alpha[sv],
        labels=y[sv], intercept=-res.rho, norm_mean=mean, norm_std=std,
        config=_config_echo(cfg),
        info={"objective": -res.objective, "iterations": res.iterations, "gap": res.gap,
              "n_train": m},
    )
    if probability:
        f = out_of_fold_decisions(X, y, kernel, cfg)
        model.platt = fit_platt(f, y)
    return model


def stratified_folds(y, k, seed) -> np.ndarray:
    """Fold index per sample, classes spread evenly over ``k`` folds."""
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=int)
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        rng.shuffle(idx)
        folds[idx] = np.arange(len(idx)) % k
    return folds


def out_of_fold_decisions(X, y, kernel, cfg) -> np.ndarray:
    folds = stratified_folds(y, cfg.platt_folds, cfg.seed)
    f = np.empty(len(y))
    for k in range(cfg.platt_folds):
        test = folds == k
        sub = train_binary(X[~test], y[~test], kernel, cfg)
        f[test] = sub.decision_function(X[test])
    return f


def effective_nu(nu: float, m: int) -> float:
    """Raise ``nu`` to ``1/m`` if smaller; ``nu = 0`` means no outliers."""
    return max(float(nu), 1.0 / m)


def train_unary(X, kernel: KernelSpec = KernelSpec.gaussian(),
                cfg: TrainConfig = TrainConfig()) -> TrainedModel:
    """One-class nu-SVM on the genuine user's windows only.

    ``cfg.nu`` upper-bounds the fraction of training windows left outside
    the boundary and lower-bounds the fraction of support vectors. Values
    below ``1/m`` are raised to ``1/m``.

    Raises
    ------
    NonFinite, NoConvergence
    """
    X = _check_finite(X)
    m = len(X)
    if m < 2:
        raise ValueError("one-class training needs at least two samples")
    nu = effective_nu(cfg.nu, m)
    mean, std = _norm_stats(X, cfg.normalize)
    Z = (X - mean) / std
    K = gram(kernel, Z)
    ub = 1.0 / (nu * m)
    n_full = min(m, int(math.floor(nu * m + 1e-9)))
    alpha0 = np.zeros(m)
    alpha0[:n_full] = ub
    if n_full < m:
        alpha0[n_full] = max(0.0, 1.0 - n_full * ub)
    res = solve_qp(K, np.zeros(m), np.ones(m), ub, alpha0,
                   tol=cfg.tol, max_iter=cfg.max_passes * m)
    # Offset at the lowest gradient among non-bounded points: within the
    # KKT tolerance, and only bounded SVs (at most nu*m) fall outside.
    grad = K @ res.alpha
    inside = res.alpha < ub
    if inside.any():
        res.rho = float(grad[inside].min())
    sv = res.alpha > 0
    return TrainedModel(
        kind="unary", kernel=kernel, support_vectors=Z[sv], alphas=res.alpha[sv],
        labels=np.ones(int(sv.sum())), intercept=-res.rho, norm_mean=mean, norm_std=std,
        config=dict(_config_echo(cfg), nu_effective=nu),
        info={"objective": res.objective, "iterations": res.iterations, "gap": res.gap,
              "n_train": m},
    )


def platt_probability(f, A, B):
    """``1 / (1 + exp(A f + B))`` evaluated without overflow."""
    z = A * np.asarray(f, dtype=float) + B
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    out[pos] = ez / (1.0 + ez)
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


def fit_platt(f, y, max_iter: int = 100, min_step: float = 1e-10,
              sigma: float = 1e-12, gtol: float = 1e-8) -> tuple[float, float]:
    """Fit Platt's sigmoid ``P(y=1|f) = 1/(1+exp(A f + B))``.

    Maximum likelihood against Platt's regularised targets
    ``(N+ + 1)/(N+ + 2)`` and ``1/(N- + 2)``, solved by Newton's method with
    backtracking (Lin, Lin & Weng, 2007). Stops once the gradient norm is
    below ``gtol``.
    """
    f = np.asarray(f, dtype=float)
    y = np.asarray(y)
    n_pos = int((y > 0).sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("Platt scaling needs both classes")
    t = np.where(y > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def nll(A, B):
        z = f * A + B
        # log(1 + exp(z)) - (1 - t) z, written stably
        return float(np.sum(np.logaddexp(0.0, z) - (1.0 - t) * z))

    A, B = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    value = nll(A, B)
    for _ in range(max_iter):
        p = platt_probability(f, A, B)  # = 1/(1+exp(z))
        d1 = t - p
        d2 = p * (1.0 - p)
        g1 = float(f @ d1)
        g2 = float(d1.sum())
        if math.hypot(g1, g2) < gtol:
            break
        h11 = sigma + float(f * f @ d2)
        h22 = sigma + float(d2.sum())
        h21 = float(f @ d2)
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            new = nll(nA, nB)
            if new < value + 1e-4 * step * gd:
                A, B, value = nA, nB, new
                break
            step /= 2
        else:
            break
    return float(A), float(B)


def with_platt(model: TrainedModel, A: float, B: float) -> TrainedModel:
    return replace(model, platt=(float(A), float(B)))
