"""
The two classifiers
===================

A quadratic-kernel SVM solves XOR once C is large enough for the box
constraint to stop binding (at C = 1 the soft-margin optimum misclassifies
(0, 0)). Platt scaling turns margins into probabilities, and a one-class
model with outlier fraction nu leaves at most about nu of its training
points outside.
"""

import numpy as np

from wearauth import KernelSpec, TrainConfig, train_binary, train_unary

X = np.array([[0, 0], [1, 1], [0, 1], [1, 0.0]])
y = np.array([1, 1, -1, -1.0])
xor = train_binary(X, y, KernelSpec.quadratic(), TrainConfig(C=10, normalize=False))
print("XOR decision values:", np.round(xor.decision_function(X), 3))

rng = np.random.default_rng(0)
A = rng.normal(0, 1, (150, 3))
B = rng.normal(1.2, 1, (150, 3))
model = train_binary(np.vstack([A, B]), np.repeat([1.0, -1.0], 150), probability=True)
probe = np.array([[0, 0, 0], [0.6, 0.6, 0.6], [1.2, 1.2, 1.2]])
print("P(genuine):", np.round(model.predict_proba(probe), 3))

# outlier fraction vs nu on one Gaussian cluster
for nu in (0.05, 0.1, 0.3, 0.5):
    oc = train_unary(A, KernelSpec.gaussian(0.5), TrainConfig(nu=nu))
    out = (oc.decision_function(A) < 0).mean()
    print(f"nu={nu:.2f}: training outliers {out:.3f}, support vectors {len(oc.alphas) / len(A):.3f}")
