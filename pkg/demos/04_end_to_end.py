"""
End to end on synthetic data
============================

Runs the configured pipeline (two weeks of minutes for 20 subjects) and then
repeats the one-class sweep with a kernel width scaled to the number of
selected features. With gamma = 1 and a dozen or more normalised features
almost every genuine test window falls outside the learned region.
Takes about a minute on one core.
"""

import json
import sys
import tempfile
from pathlib import Path

from wearauth.evaluation import SplitSpec
from wearauth.experiment import outlier_sweep
from wearauth.features import FeatureMatrix
from wearauth.pipeline import run_pipeline
from wearauth.selection import FeatureSetSpec
from wearauth.svm import KernelSpec, TrainConfig

root_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
config = {
    "experiments": [
        {"approach": a, "combo": c, "period": p, "kind": "binary"}
        for a, c, p in [("KS", "CM", "sedentary"), ("KS", "S", "sedentary"),
                        ("PC", "CM", "sedentary"), ("KS", "CM", "non_sedentary")]
    ],
}
root = run_pipeline(config, root_dir, overwrite=True)
print("run directory:", root)

for path in sorted((root / "reports").glob("*.json")):
    agg = json.loads(path.read_text())["aggregate"]
    print(f"{path.stem:32s} ACC {agg['ACC']['mu']:.3f}  FPR {agg['FPR']['mu']:.3f}  "
          f"FNR {agg['FNR']['mu']:.3f}")

eer = json.loads((root / "sweeps" / "threshold_KS_CM_sedentary_eer.json").read_text())
print("pooled EER:", eer)

print((root / "sweeps" / "outlier_KS_CM_sedentary.csv").read_text())

with open(root / "features" / "sedentary.csv") as fh:
    fm = FeatureMatrix.read_csv(fh)
fs = FeatureSetSpec.from_json((root / "feature_sets" / "KS_CM_sedentary.json").read_text())
gamma = 1 / len(fs.selected)
print(f"one-class sweep with gamma = 1/{len(fs.selected)}")
for row in outlier_sweep(fm, fs, [0.0, 0.1, 0.3, 0.5], KernelSpec.gaussian(gamma),
                         TrainConfig(seed=42), SplitSpec(seed=42)):
    print(f"  nu={row.nu:.2f}  FPR {row.fpr:.3f}  FNR {row.fnr:.3f}")
