"""
From minute records to window features
======================================

Generate a few synthetic subjects, cut their sedentary stretches into
five-minute windows and look at the 27 per-channel statistics.
"""

import numpy as np

from wearauth import feature_matrix, filter_aligned, generate_dataset, segment_windows
from wearauth.features import FEATURES, periodogram

ds = generate_dataset(4, 3000, master_seed=1)
records, dropped = filter_aligned(ds.records)
print("minutes kept:", len(records), "dropped per subject:", dropped)

windows = segment_windows(records, "sedentary")
print("sedentary windows per subject:",
      {s: len(rows) for s, rows in windows.by_subject().items()})

# one heart-rate window and its spectrum at the two non-zero bins
hr = windows.samples[0, :, 3]  # channels: calories, steps, met, heart rate
freqs, power = periodogram(hr)
print("heart rate:", hr, "frequencies:", freqs, "power:", np.round(power, 3))

fm = feature_matrix(windows, "CSMH")
print(len(FEATURES), "features per channel,", len(fm.names), "columns in total")

# mean heart rate differs from subject to subject
for s, rows in fm.by_subject().items():
    col = fm.columns(["H_mu"])[rows, 0]
    print(f"{s}: H_mu = {col.mean():6.2f} +/- {col.std(ddof=1):.2f}")
