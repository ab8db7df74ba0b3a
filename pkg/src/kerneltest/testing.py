"""High-level two-sample tests: one global test or one test per feature."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ingest import Dataset, IngestError, check_conditions, split_conditions
from .inference import (
    TestResult,
    _default_threads,
    asymptotic_pvalue,
    bh_adjust,
    chi2_sf,
    permutation_pvalue,
)
from .kernels import KernelError, KernelSpec, gram
from .kfda import (
    RANK_RTOL,
    discriminant_projections,
    eigendecompose,
    kfda_statistic,
)

__all__ = [
    "DEFAULT_T_FEATURE",
    "DEFAULT_T_GLOBAL",
    "two_sample_test",
    "global_test",
    "FeatureStatistics",
    "feature_statistics",
    "de_test",
]

DEFAULT_T_FEATURE = 4
DEFAULT_T_GLOBAL = 10

_CHUNK = 64


def two_sample_test(
    x1: np.ndarray,
    x2: np.ndarray,
    kernel: KernelSpec | None = None,
    T: int = DEFAULT_T_GLOBAL,
    method: str = "asymptotic",
    B: int = 1000,
    seed: int = 0,
    feature: str = "GLOBAL",
    alpha: float | None = None,
    threads: int | None = None,
) -> TestResult:
    """KFDA test of ``x1`` (condition 1) against ``x2``.

    The result carries the per-cell discriminant projections, condition 1
    rows first.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.ndim == 1:
        x1, x2 = x1[:, None], x2[:, None]
    if x1.shape[0] < 2 or x2.shape[0] < 2:
        raise IngestError("each condition needs at least 2 cells")
    model = eigendecompose(gram(np.vstack([x1, x2]), kernel or KernelSpec(), x1.shape[0]))
    if method == "asymptotic":
        result = asymptotic_pvalue(kfda_statistic(model, T), feature=feature)
    elif method == "permutation":
        result = permutation_pvalue(model, T, B, seed, feature, alpha, threads)
    else:
        raise ValueError(f"unknown method {method!r}")
    result.projections = discriminant_projections(model, T)
    return result


def global_test(d: Dataset, kernel: KernelSpec | None = None, T: int = DEFAULT_T_GLOBAL,
                method: str = "asymptotic", B: int = 1000, seed: int = 0,
                order=None, alpha=None, threads=None) -> tuple[TestResult, list[str], list[str]]:
    """Joint test over all features; returns the result plus the cell ids
    and condition tags in projection order."""
    check_conditions(d.labels, two_sample=True, min_cells=2)
    s1, s2 = split_conditions(d, order)
    result = two_sample_test(s1.values, s2.values, kernel, T, method, B, seed,
                             "GLOBAL", alpha, threads)
    cells = s1.cell_ids + s2.cell_ids
    conds = [s1.condition] * s1.n + [s2.condition] * s2.n
    return result, cells, conds


@dataclass
class FeatureStatistics:
    """Per-feature statistics for several truncations.

    ``d2[g, j]`` is the statistic of feature ``g`` at truncation
    ``truncations[j]``; NaN when the feature is degenerate or the spectrum
    rank is below the truncation.  ``status`` is ``"ok"``, ``"degenerate"``
    or ``"rank"``.
    """

    truncations: tuple[int, ...]
    d2: np.ndarray
    rank: np.ndarray
    status: list[str]
    n: int

    def pvalues(self) -> np.ndarray:
        out = np.full(self.d2.shape, np.nan)
        for j, T in enumerate(self.truncations):
            for g in np.flatnonzero(np.isfinite(self.d2[:, j])):
                out[g, j] = chi2_sf(max(self.d2[g, j], 0.0), T)
        return out


def _feature_grams(x: np.ndarray, n1: int, kernel: KernelSpec, dropout):
    n, g = x.shape
    grams = np.empty((g, n, n))
    ok = np.ones(g, dtype=bool)
    for j in range(g):
        col = x[:, j]
        if np.all(col == col[0]):
            ok[j] = False
            grams[j] = 0.0
            continue
        spec = kernel
        if kernel.family == "zi_gauss" and dropout is not None and kernel.zero_inflation is None:
            spec = KernelSpec("zi_gauss", kernel.bandwidth, np.full(n, dropout[j]))
        try:
            grams[j] = gram(col[:, None], spec, n1).values
        except KernelError:
            ok[j] = False
            grams[j] = 0.0
    return grams, ok


def _chunk_statistics(x, n1, kernel, truncations, dropout):
    n = x.shape[0]
    n2 = n - n1
    grams, ok = _feature_grams(x, n1, kernel, dropout)
    pk = grams.copy()
    pk[:, :n1] -= pk[:, :n1].mean(axis=1, keepdims=True)
    pk[:, n1:] -= pk[:, n1:].mean(axis=1, keepdims=True)
    kw = np.swapaxes(pk, 1, 2).copy()
    kw[:, :n1] -= kw[:, :n1].mean(axis=1, keepdims=True)
    kw[:, n1:] -= kw[:, n1:].mean(axis=1, keepdims=True)
    kw = 0.5 * (kw + np.swapaxes(kw, 1, 2)) / n
    vals, vecs = np.linalg.eigh(kw)
    omega = np.concatenate([np.full(n1, 1.0 / n1), np.full(n2, -1.0 / n2)])
    pk_omega = pk @ omega
    g = x.shape[1]
    d2 = np.full((g, len(truncations)), np.nan)
    rank = np.zeros(g, dtype=int)
    status = []
    for j in range(g):
        if not ok[j]:
            status.append("degenerate")
            continue
        v, u = vals[j][::-1], vecs[j][:, ::-1]
        if not v[0] > 0:
            status.append("degenerate")
            continue
        keep = v > RANK_RTOL * v[0]
        v, u = v[keep], u[:, keep]
        rank[j] = v.size
        contrib = (n1 * n2 / n**2) * (u.T @ pk_omega[j]) ** 2 / v**2
        cum = np.cumsum(contrib)
        for k, T in enumerate(truncations):
            if T <= v.size:
                d2[j, k] = cum[T - 1]
        status.append("ok" if max(truncations) <= v.size else "rank")
    return d2, rank, status


def feature_statistics(
    x: np.ndarray,
    n1: int,
    kernel: KernelSpec | None = None,
    truncations=(DEFAULT_T_FEATURE,),
    dropout: np.ndarray | None = None,
    threads: int | None = None,
) -> FeatureStatistics:
    """Univariate KFDA statistics for every column of ``x``.

    Each feature gets its own bandwidth.  Features are processed in fixed
    chunks, so the output does not depend on ``threads``.
    """
    x = np.asarray(x, dtype=np.float64)
    kernel = kernel or KernelSpec()
    truncations = tuple(int(t) for t in truncations)
    if min(truncations) < 1:
        raise ValueError("truncations must be >= 1")
    g = x.shape[1]
    bounds = [(lo, min(lo + _CHUNK, g)) for lo in range(0, g, _CHUNK)]

    def work(b):
        lo, hi = b
        dp = None if dropout is None else dropout[lo:hi]
        return _chunk_statistics(x[:, lo:hi], n1, kernel, truncations, dp)

    threads = _default_threads(threads)
    if threads == 1 or len(bounds) == 1:
        parts = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, bounds))
    if not parts:
        return FeatureStatistics(truncations, np.empty((0, len(truncations))),
                                 np.empty(0, dtype=int), [], x.shape[0])
    return FeatureStatistics(
        truncations,
        np.vstack([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        [s for p in parts for s in p[2]],
        x.shape[0],
    )


def de_test(
    d: Dataset,
    kernel: KernelSpec | None = None,
    T: int = DEFAULT_T_FEATURE,
    method: str = "asymptotic",
    B: int = 1000,
    seed: int = 0,
    order=None,
    threads: int | None = None,
) -> list[TestResult]:
    """One univariate test per feature, with BH-adjusted p-values.

    Degenerate features (constant, or spectrum rank below ``T``) get a NaN
    row with a warning instead of stopping the run.  Results are in feature
    order.
    """
    check_conditions(d.labels, two_sample=True, min_cells=2)
    kernel = kernel or KernelSpec()
    s1, s2 = split_conditions(d, order)
    x = np.vstack([s1.values, s2.values])
    n1 = s1.n
    dropout = d.feature_dropout
    stats = feature_statistics(x, n1, kernel, (T,), dropout, threads)
    results = []
    for j, name in enumerate(d.feature_names):
        status = stats.status[j]
        if status != "ok":
            msg = "degenerate" if status == "degenerate" else f"rank {stats.rank[j]} < T={T}"
            results.append(TestResult(name, np.nan, T, np.nan, method, n=x.shape[0],
                                      warnings=[msg]))
            continue
        if method == "permutation":
            spec = kernel
            if kernel.family == "zi_gauss" and dropout is not None and kernel.zero_inflation is None:
                spec = KernelSpec("zi_gauss", kernel.bandwidth, np.full(x.shape[0], dropout[j]))
            model = eigendecompose(gram(x[:, [j]], spec, n1))
            seed_j = int(np.random.SeedSequence([seed, j]).generate_state(1)[0])
            res = permutation_pvalue(model, T, B, seed_j, name, threads=1)
        else:
            stat_d2 = float(stats.d2[j, 0])
            res = TestResult(name, stat_d2, T, chi2_sf(max(stat_d2, 0.0), T), "asymptotic",
                             n=x.shape[0])
        results.append(res)
    valid = [r for r in results if np.isfinite(r.pvalue)]
    if valid:
        padj = bh_adjust([r.pvalue for r in valid])
        for r, q in zip(valid, padj):
            r.padj = float(q)
    return results
