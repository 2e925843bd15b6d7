"""Minute-level biometric records, alignment filtering and windowing.

Records are held column-wise in numpy arrays (:class:`Records`) because a
two-week stream for a few dozen subjects is several hundred thousand rows;
single rows are still available as :class:`BiometricRecord` via indexing.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

import numpy as np
import pandas as pd

from .errors import DuplicateMinute, EmptyInput, MalformedRow

WINDOW_LENGTH = 5

#: Channel order used everywhere a window's samples are stored.
CHANNELS = ("C", "S", "M", "H")
CHANNEL_FIELDS = {"C": "calories", "S": "steps", "M": "met", "H": "heart_rate"}

CSV_COLUMNS = ("subject_id", "minute", "heart_rate", "calories", "met",
               "steps", "activity_level")
NULL_TOKENS = ("", "NA")


class ActivityLevel(enum.IntEnum):
    SEDENTARY = 0
    LIGHT = 1
    FAIR = 2
    HIGH = 3

    @classmethod
    def parse(cls, text: str) -> "ActivityLevel":
        return cls[text.strip().upper()]


class ActivityPeriod(enum.Enum):
    SEDENTARY = "sedentary"
    NON_SEDENTARY = "non_sedentary"

    @classmethod
    def parse(cls, text) -> "ActivityPeriod":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        if key in ("nonsedentary", "non_sedentary"):
            return cls.NON_SEDENTARY
        return cls(key)

    def contains(self, level) -> bool:
        return (int(level) == ActivityLevel.SEDENTARY) == (self is ActivityPeriod.SEDENTARY)


@dataclass(frozen=True)
class BiometricRecord:
    subject_id: str
    minute: int
    heart_rate: float | None
    calories: float | None
    met: float | None
    steps: float | None
    activity_level: ActivityLevel | None


@dataclass(frozen=True)
class Window:
    subject_id: str
    start_minute: int
    activity_level: ActivityLevel
    samples: np.ndarray  # shape (5, 4), columns in CHANNELS order

    def channel(self, name: str) -> np.ndarray:
        return self.samples[:, CHANNELS.index(name)]


def _nullable(value):
    return None if np.isnan(value) else float(value)


@dataclass(frozen=True)
class Records:
    """Column store of :class:`BiometricRecord` rows.

    Missing values are NaN in the float columns and -1 in
    ``activity_level``.
    """

    subject_id: np.ndarray
    minute: np.ndarray
    heart_rate: np.ndarray
    calories: np.ndarray
    met: np.ndarray
    steps: np.ndarray
    activity_level: np.ndarray

    def __len__(self) -> int:
        return len(self.minute)

    def __getitem__(self, i) -> BiometricRecord:
        level = int(self.activity_level[i])
        return BiometricRecord(
            subject_id=str(self.subject_id[i]),
            minute=int(self.minute[i]),
            heart_rate=_nullable(self.heart_rate[i]),
            calories=_nullable(self.calories[i]),
            met=_nullable(self.met[i]),
            steps=_nullable(self.steps[i]),
            activity_level=None if level < 0 else ActivityLevel(level),
        )

    def __iter__(self) -> Iterator[BiometricRecord]:
        for i in range(len(self)):
            yield self[i]

    def take(self, mask_or_index) -> "Records":
        return Records(**{name: getattr(self, name)[mask_or_index]
                          for name in self.__dataclass_fields__})

    def subjects(self) -> list[str]:
        return sorted(set(self.subject_id.tolist()))

    @classmethod
    def from_records(cls, rows: Iterable[BiometricRecord]) -> "Records":
        rows = list(rows)

        def col(name):
            return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                             for r in rows], dtype=float)

        return cls(
            subject_id=np.array([r.subject_id for r in rows], dtype=object),
            minute=np.array([r.minute for r in rows], dtype=np.int64),
            heart_rate=col("heart_rate"),
            calories=col("calories"),
            met=col("met"),
            steps=col("steps"),
            activity_level=np.array(
                [-1 if r.activity_level is None else int(r.activity_level) for r in rows],
                dtype=np.int8),
        )

    def to_csv(self, stream: TextIO) -> None:
        names = {int(level): level.name.lower() for level in ActivityLevel}
        stream.write(",".join(CSV_COLUMNS) + "\n")

        def fmt(v):
            return "" if np.isnan(v) else repr(float(v)) if v != int(v) else str(int(v))

        for i in range(len(self)):
            level = int(self.activity_level[i])
            stream.write(",".join([
                str(self.subject_id[i]), str(int(self.minute[i])),
                fmt(self.heart_rate[i]), fmt(self.calories[i]), fmt(self.met[i]),
                fmt(self.steps[i]), names.get(level, ""),
            ]) + "\n")


def parse_records(stream: TextIO | str, met_scale: float = 1.0) -> Records:
    """Read the minute-level CSV into a sorted :class:`Records`.

    Parameters
    ----------
    stream : file-like or str
        CSV text with header ``subject_id,minute,heart_rate,calories,met,
        steps,activity_level``. Extra columns are ignored. Empty cells and
        ``NA`` are nulls.
    met_scale : float
        Multiplier applied to the ``met`` column, e.g. 0.1 for exports that
        store MET x 10 as integers.

    Raises
    ------
    EmptyInput, MalformedRow, DuplicateMinute
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    try:
        frame = pd.read_csv(stream, dtype=str, keep_default_na=False,
                            skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyInput("no header found") from None
    except pd.errors.ParserError as exc:
        raise MalformedRow(0, str(exc)) from None
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedRow(1, f"missing columns {missing}")
    if len(frame) == 0:
        raise EmptyInput("no data rows")

    lines = np.arange(len(frame)) + 2  # 1-based, after the header

    def fail(mask, reason):
        if mask.any():
            i = int(np.flatnonzero(mask)[0])
            raise MalformedRow(int(lines[i]), reason)

    subject = frame["subject_id"].str.strip()
    fail((subject == "").to_numpy(), "empty subject_id")

    minute = pd.to_numeric(frame["minute"], errors="coerce").to_numpy(dtype=float)
    fail(~np.isfinite(minute) | (minute != np.round(minute)), "minute is not an integer")

    def numeric(name):
        raw = frame[name].str.strip()
        values = pd.to_numeric(raw.where(~raw.isin(NULL_TOKENS)), errors="coerce")
        values = values.to_numpy(dtype=float)
        fail(np.isnan(values) & ~raw.isin(NULL_TOKENS).to_numpy(), f"{name} is not a number")
        fail(np.isinf(values), f"{name} is not finite")
        return values

    heart_rate = numeric("heart_rate")
    calories = numeric("calories")
    met = numeric("met") * met_scale
    steps = numeric("steps")
    fail(heart_rate <= 0, "heart_rate must be in (0, 250)")
    fail(heart_rate >= 250, "heart_rate must be in (0, 250)")
    fail(calories < 0, "calories must be >= 0")
    fail(met < 0, "met must be >= 0")
    fail(steps < 0, "steps must be >= 0")

    raw_level = frame["activity_level"].str.strip().str.lower()
    codes = {level.name.lower(): int(level) for level in ActivityLevel}
    level = raw_level.map(codes)
    null_level = raw_level.isin([t.lower() for t in NULL_TOKENS]).to_numpy()
    fail(level.isna().to_numpy() & ~null_level, "unknown activity_level")
    level = level.fillna(-1).to_numpy(dtype=np.int8)

    subject = subject.to_numpy(dtype=object)
    minute = minute.astype(np.int64)
    order = np.lexsort((minute, subject))
    subject, minute = subject[order], minute[order]
    dup = (subject[1:] == subject[:-1]) & (minute[1:] == minute[:-1])
    if dup.any():
        i = int(np.flatnonzero(dup)[0]) + 1
        raise DuplicateMinute(subject[i], int(minute[i]))

    return Records(subject_id=subject, minute=minute, heart_rate=heart_rate[order],
                   calories=calories[order], met=met[order], steps=steps[order],
                   activity_level=level[order])


def filter_aligned(records: Records) -> tuple[Records, dict[str, int]]:
    """Keep only minutes where all four biometrics and the activity level exist.

    Returns the filtered records and the number of dropped minutes per
    subject (subjects with nothing dropped map to 0).
    """
    complete = (np.isfinite(records.heart_rate) & np.isfinite(records.calories)
                & np.isfinite(records.met) & np.isfinite(records.steps)
                & (records.activity_level >= 0))
    dropped = {s: 0 for s in records.subjects()}
    for s in records.subject_id[~complete]:
        dropped[s] += 1
    return records.take(complete), dropped


@dataclass(frozen=True)
class WindowSet:
    """Column store of windows; ``samples`` has shape (n, 5, 4)."""

    subject_id: np.ndarray
    start_minute: np.ndarray
    activity_level: np.ndarray
    samples: np.ndarray

    def __len__(self) -> int:
        return len(self.start_minute)

    def __getitem__(self, i) -> Window:
        return Window(str(self.subject_id[i]), int(self.start_minute[i]),
                      ActivityLevel(int(self.activity_level[i])), self.samples[i])

    def __iter__(self) -> Iterator[Window]:
        for i in range(len(self)):
            yield self[i]

    def take(self, index) -> "WindowSet":
        return WindowSet(self.subject_id[index], self.start_minute[index],
                         self.activity_level[index], self.samples[index])

    def by_subject(self) -> dict[str, np.ndarray]:
        return {s: np.flatnonzero(self.subject_id == s)
                for s in sorted(set(self.subject_id.tolist()))}


def run_lengths(records: Records) -> tuple[np.ndarray, np.ndarray]:
    """Start index and length of every maximal run of consecutive minutes
    at one activity level within one subject."""
    n = len(records)
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    brk = ((records.subject_id[1:] != records.subject_id[:-1])
           | (records.minute[1:] != records.minute[:-1] + 1)
           | (records.activity_level[1:] != records.activity_level[:-1]))
    starts = np.concatenate([[0], np.flatnonzero(brk) + 1])
    lengths = np.diff(np.concatenate([starts, [n]]))
    return starts, lengths


def segment_windows(records: Records, period: ActivityPeriod | str) -> WindowSet:
    """Cut aligned records into non-overlapping five-minute windows.

    Each maximal run of consecutive minutes at one activity level yields
    ``len // 5`` windows laid back to back from the start of the run; the
    remainder is discarded. A missing minute ends a run. Only windows whose
    level belongs to ``period`` are returned.
    """
    period = ActivityPeriod.parse(period)
    starts, lengths = run_lengths(records)
    counts = lengths // WINDOW_LENGTH
    keep = np.array([period.contains(lv) for lv in records.activity_level[starts]],
                    dtype=bool) if len(starts) else np.zeros(0, dtype=bool)
    counts = np.where(keep, counts, 0)
    first = np.repeat(starts, counts)
    offset = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    first = first + WINDOW_LENGTH * offset
    rows = first[:, None] + np.arange(WINDOW_LENGTH)[None, :]
    samples = np.stack([getattr(records, CHANNEL_FIELDS[c])[rows] for c in CHANNELS],
                       axis=-1) if len(first) else np.zeros((0, WINDOW_LENGTH, 4))
    return WindowSet(subject_id=records.subject_id[first],
                     start_minute=records.minute[first],
                     activity_level=records.activity_level[first].astype(np.int8),
                     samples=samples.astype(float))
