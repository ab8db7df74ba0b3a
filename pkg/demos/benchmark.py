"""Small benchmark: the kernel test against Welch and KS on every alternative.

Twenty replicates of a reduced desk scenario (seconds on one core); the
full desk run is ``kerneltest benchmark --preset desk --tests kfda,welch,ks``.
"""

import kerneltest as kt
from kerneltest.simulate import BaselineTest, KernelTestConfig

spec = kt.load_preset("desk").with_sizes(50, 50, {c: 40 for c in
                                                  ("DE", "DM", "DP", "DB", "H0_unimodal")})
tests = [KernelTestConfig("gauss", 4), KernelTestConfig("gauss", 1),
         BaselineTest("welch"), BaselineTest("ks")]
for report in kt.run_benchmark(spec, tests, replicates=20, seed=0):
    print(report.summary())
