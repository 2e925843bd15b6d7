"""The 27 per-channel window features.

All statistics are computed column-wise on an ``(n_windows, 5)`` array, so a
whole :class:`~wearauth.data.WindowSet` is featurised in one pass.
Degenerate denominators (zero mean, zero spread, ...) yield 0, never NaN.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import TextIO

import numpy as np
import pandas as pd

from .data import CHANNELS, ActivityLevel, Window, WindowSet
from .errors import DegenerateWindow

FEATURES = (
    "mu", "sigma", "sigma2", "cov", "max", "min", "ran", "coran",
    "p25", "p50", "p75", "p95", "iqr", "coi", "mad_mu", "mad_Mdn",
    "f_mu", "f_Mdn", "P", "np", "E", "rms", "p2rms", "rss", "snr",
    "gamma", "kappa",
)
ACTIVITY_FEATURE = "activity"
SAMPLE_RATE = 1.0  # samples per minute
MEDIAN_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class Combo:
    """A non-empty subset of the channels, always in C, S, M, H order."""

    channels: tuple[str, ...]

    @classmethod
    def parse(cls, text) -> "Combo":
        if isinstance(text, Combo):
            return text
        letters = set(str(text).upper())
        if not letters or not letters <= set(CHANNELS):
            raise ValueError(f"not a biometric combination: {text!r}")
        return cls(tuple(c for c in CHANNELS if c in letters))

    @property
    def name(self) -> str:
        return "".join(self.channels)

    def __str__(self) -> str:
        return self.name


def feature_names(combo="CSMH", include_activity: bool = False) -> list[str]:
    names = [f"{c}_{f}" for c in Combo.parse(combo).channels for f in FEATURES]
    if include_activity:
        names.append(ACTIVITY_FEATURE)
    return names


def _safe_div(num, den):
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def periodogram(x):
    """One-sided periodogram of the mean-removed signal.

    Parameters
    ----------
    x : array_like, shape (..., n)

    Returns
    -------
    freqs : ndarray, shape (n // 2,)
        Bin frequencies in cycles per minute, DC excluded.
    power : ndarray, shape (..., n // 2)
        ``|DFT_k|**2 / n`` for each non-DC bin.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    spectrum = np.fft.rfft(x - x.mean(axis=-1, keepdims=True), axis=-1)[..., 1:n // 2 + 1]
    freqs = np.arange(1, n // 2 + 1) * SAMPLE_RATE / n
    return freqs, np.abs(spectrum) ** 2 / n


def count_peaks(x):
    """Number of strict interior local maxima along the last axis."""
    x = np.asarray(x, dtype=float)
    peaks = (x[..., 1:-1] > x[..., :-2]) & (x[..., 1:-1] > x[..., 2:])
    return peaks.sum(axis=-1)


def channel_features(x) -> np.ndarray:
    """Compute all 27 features for each row of ``x`` (shape ``(n, 5)``).

    Returns an ``(n, 27)`` array with columns in :data:`FEATURES` order.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.isfinite(x).all():
        raise DegenerateWindow("window contains non-finite samples")
    n = x.shape[1]
    constant = np.ptp(x, axis=1) == 0

    mu = x.mean(axis=1)
    dev = np.where(constant[:, None], 0.0, x - mu[:, None])
    var = (dev ** 2).sum(axis=1) / (n - 1)
    sigma = np.sqrt(var)
    xmax, xmin = x.max(axis=1), x.min(axis=1)
    ran = xmax - xmin
    p25, p50, p75, p95 = np.percentile(x, [25, 50, 75, 95], axis=1)
    iqr = p75 - p25

    freqs, power = periodogram(x)
    power = np.where(constant[:, None], 0.0, power)
    total = power.sum(axis=1)
    f_mu = _safe_div(power @ freqs, total)
    # an exact half-power tie resolves to the lower bin despite rounding
    reached = np.cumsum(power, axis=1) >= total[:, None] * (0.5 - MEDIAN_TIE_RTOL)
    f_mdn = np.where(total > 0, freqs[np.argmax(reached, axis=1)], 0.0)

    energy = (x ** 2).sum(axis=1)
    pw = energy / n
    rms = np.sqrt(pw)
    m2 = (dev ** 2).mean(axis=1)
    m3 = (dev ** 3).mean(axis=1)
    m4 = (dev ** 4).mean(axis=1)

    columns = {
        "mu": mu,
        "sigma": sigma,
        "sigma2": var,
        "cov": _safe_div(sigma, mu),
        "max": xmax,
        "min": xmin,
        "ran": ran,
        "coran": _safe_div(ran, xmax + xmin),
        "p25": p25,
        "p50": p50,
        "p75": p75,
        "p95": p95,
        "iqr": iqr,
        "coi": _safe_div(iqr, p75 + p25),
        "mad_mu": np.abs(dev).mean(axis=1),
        "mad_Mdn": np.median(np.abs(x - p50[:, None]), axis=1),
        "f_mu": f_mu,
        "f_Mdn": f_mdn,
        "P": pw,
        "np": count_peaks(x).astype(float),
        "E": energy,
        "rms": rms,
        "p2rms": _safe_div(np.abs(x).max(axis=1), rms),
        "rss": np.sqrt(energy),
        "snr": _safe_div(mu, sigma),
        "gamma": _safe_div(m3, m2 ** 1.5),
        "kappa": _safe_div(m4, m2 ** 2),
    }
    return np.column_stack([columns[f] for f in FEATURES])


@dataclass(frozen=True)
class FeatureVector:
    window_ref: tuple[str, int]
    values: dict[str, float]


def extract_features(window: Window, combo="CSMH",
                     include_activity: bool = False) -> FeatureVector:
    """Feature vector of a single window.

    For every channel in ``combo`` the 27 features are named
    ``<channel>_<feature>``; ``include_activity`` appends the ordinal
    activity level (light=1, fair=2, high=3) as ``activity``.
    """
    combo = Combo.parse(combo)
    values = {}
    for c in combo.channels:
        row = channel_features(window.channel(c)[None, :])[0]
        values.update((f"{c}_{f}", float(v)) for f, v in zip(FEATURES, row))
    if include_activity:
        values[ACTIVITY_FEATURE] = float(int(window.activity_level))
    return FeatureVector((window.subject_id, window.start_minute), values)


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows for a set of windows plus their identifying metadata."""

    names: list[str]
    values: np.ndarray
    subject_id: np.ndarray
    start_minute: np.ndarray
    activity_level: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def columns(self, names) -> np.ndarray:
        index = {n: i for i, n in enumerate(self.names)}
        return self.values[:, [index[n] for n in names]]

    def select(self, names) -> "FeatureMatrix":
        return FeatureMatrix(list(names), self.columns(names), self.subject_id,
                             self.start_minute, self.activity_level)

    def take(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(self.names, self.values[rows], self.subject_id[rows],
                             self.start_minute[rows], self.activity_level[rows])

    def restrict(self, combo, include_activity=None) -> "FeatureMatrix":
        """Columns belonging to ``combo`` (and the activity feature if present)."""
        letters = Combo.parse(combo).channels
        keep = [n for n in self.names
                if (n == ACTIVITY_FEATURE and include_activity is not False)
                or n.split("_", 1)[0] in letters]
        return self.select(keep)

    def by_subject(self) -> dict[str, np.ndarray]:
        return {s: np.flatnonzero(self.subject_id == s)
                for s in sorted(set(self.subject_id.tolist()))}

    def to_csv(self, stream: TextIO) -> None:
        frame = pd.DataFrame(self.values, columns=self.names)
        frame.insert(0, "activity_level",
                     [ActivityLevel(int(v)).name.lower() for v in self.activity_level])
        frame.insert(0, "start_minute", self.start_minute)
        frame.insert(0, "subject_id", self.subject_id)
        frame.to_csv(stream, index=False, float_format="%.17g", lineterminator="\n")

    @classmethod
    def read_csv(cls, stream: TextIO | str) -> "FeatureMatrix":
        if isinstance(stream, str):
            stream = io.StringIO(stream)
        frame = pd.read_csv(stream, dtype={"subject_id": str}, float_precision="round_trip")
        names = [c for c in frame.columns
                 if c not in ("subject_id", "start_minute", "activity_level")]
        levels = frame["activity_level"].map(lambda s: int(ActivityLevel.parse(s)))
        return cls(names, frame[names].to_numpy(dtype=float),
                   frame["subject_id"].to_numpy(dtype=object),
                   frame["start_minute"].to_numpy(dtype=np.int64),
                   levels.to_numpy(dtype=np.int8))


def feature_matrix(windows: WindowSet, combo="CSMH",
                   include_activity: bool = False) -> FeatureMatrix:
    """Featurise every window in ``windows``."""
    combo = Combo.parse(combo)
    blocks = [channel_features(windows.samples[:, :, CHANNELS.index(c)])
              if len(windows) else np.zeros((0, len(FEATURES)))
              for c in combo.channels]
    if include_activity:
        blocks.append(windows.activity_level.astype(float)[:, None])
    return FeatureMatrix(feature_names(combo, include_activity), np.hstack(blocks),
                         windows.subject_id, windows.start_minute, windows.activity_level)
