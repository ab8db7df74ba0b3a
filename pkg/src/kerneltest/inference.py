"""P-values for the KFDA statistic and multiplicity adjustment."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernels import GramMatrix
from .kfda import (
    RANK_RTOL,
    KfdaModel,
    NumericalError,
    StatisticValue,
    eigendecompose,
    kfda_statistic,
)

__all__ = [
    "TestResult",
    "SMALL_SAMPLE_N",
    "chi2_sf",
    "regularized_gamma_q",
    "asymptotic_pvalue",
    "permutation_statistics",
    "permutation_pvalue",
    "bh_adjust",
]

SMALL_SAMPLE_N = 100

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


@dataclass
class TestResult:
    """Outcome of one KFDA test (a feature, or ``"GLOBAL"``)."""

    __test__ = False

    feature: str
    d2: float
    df: int
    pvalue: float
    method: str = "asymptotic"
    padj: float | None = None
    n: int | None = None
    warnings: list[str] = field(default_factory=list)
    projections: np.ndarray | None = field(default=None, repr=False)

    @property
    def small_sample(self) -> bool:
        return any(w.startswith("small sample") for w in self.warnings)


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise NumericalError("incomplete gamma series did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_continued_fraction(a: float, x: float) -> float:
    # modified Lentz evaluation
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise NumericalError("incomplete gamma continued fraction did not converge")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma ``Q(a, x) = Gamma(a, x) / Gamma(a)``."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_p_series(a, x))
    return _gamma_q_continued_fraction(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail probability of a chi-square law with ``df`` degrees of freedom."""
    if x < 0:
        raise ValueError(f"chi-square statistic must be nonnegative, got {x}")
    if df < 1 or int(df) != df:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df}")
    if df == 2:
        return math.exp(-x / 2.0)
    return regularized_gamma_q(df / 2.0, x / 2.0)


def asymptotic_pvalue(
    stat: StatisticValue, T: int | None = None, feature: str = "GLOBAL"
) -> TestResult:
    """Chi-square(T) p-value; flags samples below ``SMALL_SAMPLE_N`` cells."""
    if T is not None and T != stat.T:
        raise ValueError(f"truncation mismatch: statistic computed with T={stat.T}, got T={T}")
    result = TestResult(feature, stat.d2, stat.T, chi2_sf(max(stat.d2, 0.0), stat.T), n=stat.n)
    if stat.n < SMALL_SAMPLE_N:
        result.warnings.append(
            f"small sample (n={stat.n} < {SMALL_SAMPLE_N}): permutation p-value recommended"
        )
    return result


def _default_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    return max(1, int(os.environ.get("KERNELTEST_THREADS", "1")))


def _stat_from_spectrum(vals, vecs, pk_omega, n1, n2, T) -> float:
    n = n1 + n2
    top = vals[-1]
    if not top > 0:
        return 0.0
    keep = vals > RANK_RTOL * top
    vals, vecs = vals[keep][::-1], vecs[:, keep][:, ::-1]
    t = min(T, vals.size)
    scores = vecs[:, :t].T @ pk_omega
    return float((n1 * n2 / n**2) * np.sum(scores**2 / vals[:t] ** 2))


def _permutation_chunk(k: np.ndarray, n1: int, T: int, seed: int, reps: range) -> np.ndarray:
    n = k.shape[0]
    n2 = n - n1
    omega = np.concatenate([np.full(n1, 1.0 / n1), np.full(n2, -1.0 / n2)])
    orders = [np.random.default_rng([seed, b]).permutation(n) for b in reps]
    kb = np.stack([k[np.ix_(o, o)] for o in orders])
    pk = kb.copy()
    pk[:, :n1] -= pk[:, :n1].mean(axis=1, keepdims=True)
    pk[:, n1:] -= pk[:, n1:].mean(axis=1, keepdims=True)
    kw = np.swapaxes(pk, 1, 2).copy()
    kw[:, :n1] -= kw[:, :n1].mean(axis=1, keepdims=True)
    kw[:, n1:] -= kw[:, n1:].mean(axis=1, keepdims=True)
    kw = 0.5 * (kw + np.swapaxes(kw, 1, 2)) / n
    try:
        vals, vecs = np.linalg.eigh(kw)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    pk_omega = pk @ omega
    return np.array([
        _stat_from_spectrum(vals[i], vecs[i], pk_omega[i], n1, n2, T) for i in range(len(orders))
    ])


def permutation_statistics(
    K: GramMatrix, T: int, B: int, seed: int = 0, threads: int | None = None
) -> np.ndarray:
    """Statistics of ``B`` label permutations that keep the block sizes.

    Replicate ``b`` draws its permutation from a generator seeded by
    ``(seed, b)``, so results do not depend on ``threads``.  A permuted
    spectrum of rank below ``T`` contributes all its directions.
    """
    if B < 1:
        raise ValueError("need at least one permutation")
    threads = _default_threads(threads)
    chunks = [range(lo, min(lo + 64, B)) for lo in range(0, B, 64)]
    if threads == 1:
        parts = [_permutation_chunk(K.values, K.n1, T, seed, c) for c in chunks]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(
                pool.map(lambda c: _permutation_chunk(K.values, K.n1, T, seed, c), chunks)
            )
    return np.concatenate(parts)


def permutation_pvalue(
    K: GramMatrix | KfdaModel,
    T: int,
    B: int = 1000,
    seed: int = 0,
    feature: str = "GLOBAL",
    alpha: float | None = None,
    threads: int | None = None,
) -> TestResult:
    """Add-one permutation p-value ``(1 + #{d2_b >= d2_obs}) / (B + 1)``.

    The Gram matrix is computed once by the caller; each permutation only
    reorders it and recomputes the centered spectrum.
    """
    model = K if isinstance(K, KfdaModel) else eigendecompose(K)
    gm = model.gram
    observed = kfda_statistic(model, T).d2
    null = permutation_statistics(gm, T, B, seed, threads)
    # ties within rounding count as exceedances
    exceed = int(np.sum(null >= observed - 1e-12 * max(abs(observed), 1.0)))
    result = TestResult(feature, observed, T, (1 + exceed) / (B + 1), "permutation", n=gm.n)
    if alpha is not None and 1.0 / (B + 1) > alpha:
        result.warnings.append(
            f"B={B} permutations cannot reach p <= alpha={alpha} (minimum p is {1 / (B + 1):.3g})"
        )
    return result


def bh_adjust(pvalues) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(pvalues, dtype=np.float64)
    if p.ndim != 1:
        p = p.ravel()
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    # p * (m / i) keeps padj >= p exact under rounding
    scaled = p[order] * (m / np.arange(1, m + 1))
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adjusted, 1.0)
    return out
