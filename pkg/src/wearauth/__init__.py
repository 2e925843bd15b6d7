"""Implicit authentication of wearable users from minute-level biometrics.

Pipeline: minute records -> five-minute windows -> 27 statistical features
per biometric -> KS / Pearson / SD feature selection -> per-subject
quadratic-kernel SVM (binary) or Gaussian one-class SVM (unary) ->
ACC / FPR / FNR / EER evaluation and threshold sweeps.
"""

__version__ = "0.1.0"

from .data import (ActivityLevel, ActivityPeriod, BiometricRecord, Records, Window, WindowSet,
                   filter_aligned, parse_records, segment_windows)
from .evaluation import (EvalReport, SplitSpec, aggregate_report, compute_eer, evaluate_model,
                         evaluate_scores, make_split, sweep_outlier_fraction,
                         sweep_probability_threshold)
from .features import (Combo, FeatureMatrix, FeatureVector, count_peaks, extract_features,
                       feature_matrix, periodogram)
from .persist import load_model, persist_model
from .selection import (FeatureSetSpec, ks_pvalue, ks_statistic, prune_pearson, select_ks,
                        select_sd)
from .svm import (KernelSpec, TrainConfig, TrainedModel, decision_value, fit_platt, kernel_eval,
                  predict_proba, train_binary, train_unary)
from .synth import SubjectProfile, generate_dataset, generate_subject
