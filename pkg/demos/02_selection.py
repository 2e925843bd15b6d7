"""
Choosing features
=================

KS keeps features that tell most subjects apart from everyone else; PC then
drops one of each highly correlated pair and SD keeps the top-k by spread of
subject means.
"""

from wearauth import (feature_matrix, filter_aligned, generate_dataset, prune_pearson,
                      segment_windows, select_ks, select_sd)

ds = generate_dataset(8, 5000, master_seed=3)
fm = feature_matrix(segment_windows(filter_aligned(ds.records)[0], "sedentary"), "CM")
X, names = fm.values, fm.names

ks = select_ks(X, fm.subject_id, names, alpha=0.05, tau=0.5)
print(f"KS keeps {len(ks.selected)} of {len(names)}")
for name in sorted(ks.selected, key=lambda n: -ks.scores[n])[:8]:
    print(f"  {name:10s} significant for {ks.scores[name]} subjects")

pc = prune_pearson(X, names, ks, rho=0.9)
print(f"PC keeps {len(pc.selected)}:", pc.selected)

sd = select_sd(X, fm.subject_id, names, ks, top_k=10, strict=False)
print("SD top 10:", sd.selected)
