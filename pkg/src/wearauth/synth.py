"""Synthetic multi-subject minute-level biometric streams.

Stand-in for a private wearable dataset. Activity level follows a Markov
chain; heart rate is a per-subject resting rate plus a level-dependent gain
plus AR(1) noise; steps are Poisson with a per-subject, per-level rate.
Calories and MET are derived from heart rate, steps, weight and age, so the
two "hybrid" channels mix physiological, behavioural and demographic
information.

Randomness comes from numpy's PCG64 generator. Every subject has its own
seed spawned from the master seed with :class:`numpy.random.SeedSequence`,
so output depends only on ``(master_seed, n_subjects, minutes)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .data import ActivityLevel, Records
from .errors import InvalidTransitionMatrix

LEVELS = [level.name.lower() for level in ActivityLevel]

# ~70% of minutes sedentary; active bouts are short.
DEFAULT_TRANSITION = np.array([
    [0.958, 0.033, 0.007, 0.002],
    [0.110, 0.840, 0.040, 0.010],
    [0.080, 0.120, 0.750, 0.050],
    [0.060, 0.070, 0.120, 0.750],
])

HR_AR_COEF = 0.8
MET_KCAL = 0.0175       # kcal per kg per minute at 1 MET
HR_KCAL = 0.0007        # kcal per kg per beat above resting
STEP_KCAL = 0.0004      # kcal per kg per step
MIN_MET = 0.9


@dataclass
class SubjectProfile:
    subject_id: str
    weight_kg: float
    age_years: float
    resting_hr: float
    hr_activity_gain: dict[str, float]
    step_rate: dict[str, float]
    noise_scales: dict[str, float]
    seed: int

    def __post_init__(self):
        if not 45 <= self.resting_hr <= 90:
            raise ValueError("resting_hr must be in [45, 90]")
        if not 0 <= self.step_rate["sedentary"] <= 5:
            raise ValueError("sedentary step rate must be in [0, 5]")
        if any(v < 0 for v in self.noise_scales.values()):
            raise ValueError("noise scales must be non-negative")


def draw_profile(subject_id: str, seed: int) -> SubjectProfile:
    """Sample a profile from the default priors (college-age cohort)."""
    rng = np.random.default_rng(seed)
    return SubjectProfile(
        subject_id=subject_id,
        weight_kg=float(np.clip(rng.normal(68, 12), 45, 120)),
        age_years=float(np.clip(rng.normal(18, 1), 17, 21)),
        resting_hr=float(np.clip(rng.normal(68, 8), 45, 90)),
        hr_activity_gain={
            "sedentary": 0.0,
            "light": float(max(rng.normal(18, 4), 5)),
            "fair": float(max(rng.normal(35, 6), 15)),
            "high": float(max(rng.normal(55, 8), 30)),
        },
        step_rate={
            "sedentary": float(rng.uniform(0.5, 5.0)),
            "light": float(max(rng.normal(45, 10), 10)),
            "fair": float(max(rng.normal(90, 12), 40)),
            "high": float(max(rng.normal(125, 12), 70)),
        },
        noise_scales={
            "heart_rate": float(rng.uniform(1.5, 4.5)),
            "calories": float(rng.uniform(0.02, 0.06)),
        },
        seed=int(seed),
    )


def check_transition(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.shape != (4, 4):
        raise InvalidTransitionMatrix(f"expected 4x4, got {P.shape}")
    if (P < 0).any() or np.abs(P.sum(axis=1) - 1).max() > 1e-9:
        raise InvalidTransitionMatrix("rows must be non-negative and sum to 1")
    return P


def stationary_distribution(P) -> np.ndarray:
    """Left eigenvector of ``P`` for eigenvalue 1, normalised to sum 1."""
    P = check_transition(P)
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1))])
    return pi / pi.sum()


def _markov_chain(P, minutes, rng):
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(minutes)
    states = np.empty(minutes, dtype=np.int8)
    state = 0  # recordings start sedentary
    for t in range(minutes):
        if t:
            state = min(int(np.searchsorted(cum[state], u[t], side="right")), 3)
        states[t] = state
    return states


def _bounded_normal(rng, scale, size):
    return np.clip(rng.standard_normal(size), -3, 3) * scale


def derived_calories(heart_rate, steps, profile: SubjectProfile):
    """Noise-free calories per minute from heart rate, steps and demographics."""
    w = profile.weight_kg
    base = MET_KCAL * w * (1 + 0.02 * (profile.age_years - 18))
    return (base + HR_KCAL * w * np.maximum(heart_rate - profile.resting_hr, 0)
            + STEP_KCAL * w * steps)


def derived_met(calories, profile: SubjectProfile):
    return np.maximum(calories / (profile.weight_kg * MET_KCAL), MIN_MET)


def generate_subject(profile: SubjectProfile, minutes: int, transition=None,
                     start_minute: int = 0) -> Records:
    """Minute-level stream for one subject, fully determined by
    ``profile.seed``."""
    if minutes < 1:
        raise ValueError("minutes must be >= 1")
    P = check_transition(DEFAULT_TRANSITION if transition is None else transition)
    rng = np.random.default_rng(profile.seed)
    levels = _markov_chain(P, minutes, rng)

    gain = np.array([profile.hr_activity_gain[name] for name in LEVELS])
    rate = np.array([profile.step_rate[name] for name in LEVELS])
    sigma_hr = profile.noise_scales.get("heart_rate", 0.0)
    innovations = rng.standard_normal(minutes) * sigma_hr * np.sqrt(1 - HR_AR_COEF ** 2)
    ar = lfilter([1.0], [1.0, -HR_AR_COEF], innovations)
    heart_rate = np.clip(np.round(profile.resting_hr + gain[levels] + ar), 30, 220)
    steps = rng.poisson(rate[levels]).astype(float)
    calories = derived_calories(heart_rate, steps, profile)
    calories = np.maximum(
        calories + _bounded_normal(rng, profile.noise_scales.get("calories", 0.0), minutes), 0)
    met = derived_met(calories, profile)

    return Records(
        subject_id=np.full(minutes, profile.subject_id, dtype=object),
        minute=start_minute + np.arange(minutes, dtype=np.int64),
        heart_rate=heart_rate, calories=calories, met=met, steps=steps,
        activity_level=levels,
    )


def _concat(parts: list[Records]) -> Records:
    return Records(**{name: np.concatenate([getattr(r, name) for r in parts])
                      for name in Records.__dataclass_fields__})


@dataclass
class SyntheticDataset:
    records: Records
    profiles: list[SubjectProfile] = field(default_factory=list)
    master_seed: int = 0
    minutes: int = 0

    def write(self, csv_path, profiles_path=None) -> None:
        """Write the CSV and a ``profiles.json`` sidecar next to it."""
        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="") as fh:
            self.records.to_csv(fh)
        profiles_path = Path(profiles_path or csv_path.with_name("profiles.json"))
        profiles_path.write_text(json.dumps(
            {"master_seed": self.master_seed, "minutes": self.minutes,
             "profiles": [asdict(p) for p in self.profiles]}, indent=2) + "\n")


def generate_dataset(n_subjects: int, minutes: int, master_seed: int = 0,
                     transition=None) -> SyntheticDataset:
    """Draw ``n_subjects`` profiles and generate their streams."""
    if n_subjects < 2:
        raise ValueError("need at least two subjects")
    children = np.random.SeedSequence(master_seed).spawn(n_subjects)
    profiles = [draw_profile(f"S{k:03d}", int(child.generate_state(1)[0]))
                for k, child in enumerate(children)]
    parts = [generate_subject(p, minutes, transition) for p in profiles]
    return SyntheticDataset(_concat(parts), profiles, master_seed, minutes)
