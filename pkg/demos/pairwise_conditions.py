"""Pairwise statistics between several conditions.

Five conditions along a trajectory (mean shifting step by step).  The
matrix of pairwise statistics can feed any tree or embedding tool.
"""

import numpy as np

import kerneltest as kt

rng = np.random.default_rng(0)
steps = [0.0, 0.3, 0.6, 0.9, 1.2]
x = np.vstack([rng.normal(m, 1.0, size=(80, 3)) for m in steps])
labels = [f"t{i}" for i, _ in enumerate(steps) for _ in range(80)]

tags, mat = kt.pairwise_statistics(x, labels, T=10)
print("      " + "".join(f"{t:>9s}" for t in tags))
for t, row in zip(tags, mat):
    print(f"{t:6s}" + "".join(f"{v:9.1f}" for v in row))
