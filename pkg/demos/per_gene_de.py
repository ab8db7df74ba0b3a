"""Per-gene testing on simulated ZINB counts with known ground truth.

Simulates the desk scenario at 50 + 50 cells, runs one kernel test per gene
(T=4, per-gene median bandwidth), and compares discoveries at BH 5% with
the true categories.
"""

from collections import Counter

import numpy as np

import kerneltest as kt

spec = kt.load_preset("desk")
d = kt.generate_scenario(spec, seed=0)
results = kt.de_test(d, kt.KernelSpec("gauss"), T=4)

hits = Counter()
for r, cat in zip(results, d.feature_categories):
    if r.padj is not None and r.padj <= 0.05:
        hits[cat] += 1
total = Counter(d.feature_categories)
for cat in total:
    print(f"{cat:12s} discovered {hits[cat]:3d} / {total[cat]}")

na = [r.feature for r in results if not np.isfinite(r.pvalue)]
print(f"{len(na)} genes could not be tested (constant or rank below T)")
