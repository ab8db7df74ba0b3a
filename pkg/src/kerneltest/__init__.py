"""Kernel Fisher discriminant two-sample tests for single-cell data.

Quick use::

    import kerneltest as kt

    d = kt.load_dataset("matrix.csv", "labels.csv")
    result, cells, conds = kt.global_test(d)          # multivariate
    per_gene = kt.de_test(d, kt.KernelSpec("gauss"))  # one test per feature
"""

from __future__ import annotations

__version__ = "0.1.0"

from .inference import (
    TestResult,
    asymptotic_pvalue,
    bh_adjust,
    chi2_sf,
    permutation_pvalue,
    permutation_statistics,
)
from .ingest import (
    Dataset,
    IngestError,
    Sample,
    load_dataset,
    log_normalize,
    split_conditions,
    write_dataset,
)
from .kernels import GramMatrix, KernelError, KernelSpec, gram, median_heuristic
from .kfda import (
    KfdaModel,
    NumericalError,
    StatisticValue,
    TruncationError,
    discriminant_projections,
    eigendecompose,
    kfda_from_data,
    kfda_statistic,
    mmd_statistic,
    pairwise_statistics,
)
from .nystrom import nystrom_statistic
from .simulate import (
    BaselineTest,
    BenchmarkReport,
    KernelTestConfig,
    ScenarioSpec,
    ZinbParams,
    generate_scenario,
    load_preset,
    run_benchmark,
    sample_zinb,
)
from .testing import de_test, feature_statistics, global_test, two_sample_test

__all__ = [
    "__version__",
    "BaselineTest",
    "BenchmarkReport",
    "Dataset",
    "GramMatrix",
    "IngestError",
    "KernelError",
    "KernelSpec",
    "KernelTestConfig",
    "KfdaModel",
    "NumericalError",
    "Sample",
    "ScenarioSpec",
    "StatisticValue",
    "TestResult",
    "TruncationError",
    "ZinbParams",
    "asymptotic_pvalue",
    "bh_adjust",
    "chi2_sf",
    "de_test",
    "discriminant_projections",
    "eigendecompose",
    "feature_statistics",
    "generate_scenario",
    "global_test",
    "gram",
    "kfda_from_data",
    "kfda_statistic",
    "load_dataset",
    "load_preset",
    "log_normalize",
    "median_heuristic",
    "mmd_statistic",
    "nystrom_statistic",
    "pairwise_statistics",
    "permutation_pvalue",
    "permutation_statistics",
    "run_benchmark",
    "sample_zinb",
    "split_conditions",
    "two_sample_test",
    "write_dataset",
]
