"""Nystrom approximation for a large sample.

Compares the exact statistic at n=2000 with landmark approximations of
increasing size, along with the time each takes.
"""

import time

import numpy as np

import kerneltest as kt

rng = np.random.default_rng(0)
x = np.vstack([rng.normal(size=(1000, 5)), rng.normal(0.1, size=(1000, 5))])

t0 = time.perf_counter()
exact = kt.kfda_statistic(kt.kfda_from_data(x, 1000), 10).d2
print(f"exact      D2={exact:9.3f}  {time.perf_counter() - t0:6.2f}s")

for m in (50, 100, 200, 400):
    t0 = time.perf_counter()
    approx = kt.nystrom_statistic(x, 1000, T=10, landmarks=m, seed=1).d2
    print(f"m={m:<4d}     D2={approx:9.3f}  {time.perf_counter() - t0:6.2f}s  "
          f"rel err {abs(approx - exact) / exact:.2e}")
