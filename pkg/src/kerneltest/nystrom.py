"""Nystrom (landmark) approximation of the KFDA statistic for large samples.

Landmarks are drawn uniformly without replacement inside each condition,
in proportion to the condition sizes.  With ``C`` the kernel between all
cells and the landmarks and ``W`` the landmark Gram matrix, cells get the
explicit features ``Phi = C V diag(w)^-1/2`` (eigenpairs of ``W`` below
``1e-12 * w_max`` dropped), so that ``Phi Phi' = C W^+ C'``.  The statistic
is then evaluated directly in this r-dimensional feature space, at
O(n m^2) cost instead of O(n^3).
"""

from __future__ import annotations

import numpy as np

from .kernels import KernelSpec, cross_kernel, resolve
from .kfda import RANK_RTOL, NumericalError, StatisticValue, TruncationError, block_center

__all__ = ["PINV_RTOL", "choose_landmarks", "nystrom_features", "nystrom_statistic"]

PINV_RTOL = 1e-12


def choose_landmarks(n1: int, n2: int, landmarks: int, seed=0) -> np.ndarray:
    """Sorted landmark row indices, stratified by condition."""
    n = n1 + n2
    if not 1 <= landmarks <= n:
        raise ValueError(f"landmarks must be in [1, {n}], got {landmarks}")
    m1 = int(round(landmarks * n1 / n))
    m1 = min(max(m1, 1 if landmarks >= 2 else 0), n1)
    m2 = landmarks - m1
    if m2 > n2:
        m2, m1 = n2, landmarks - n2
    rng = np.random.default_rng(seed)
    first = rng.choice(n1, size=m1, replace=False)
    second = n1 + rng.choice(n2, size=m2, replace=False)
    return np.sort(np.concatenate([first, second]))


def nystrom_features(x: np.ndarray, spec: KernelSpec, rows: np.ndarray) -> np.ndarray:
    """Explicit low-rank features whose inner products approximate the kernel."""
    c = cross_kernel(x, rows, spec)
    w = c[rows]
    w = 0.5 * (w + w.T)
    try:
        vals, vecs = np.linalg.eigh(w)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    top = vals[-1]
    if not top > 0:
        return np.zeros((x.shape[0], 0))
    keep = vals > PINV_RTOL * top
    return c @ (vecs[:, keep] / np.sqrt(vals[keep]))


def nystrom_statistic(
    x: np.ndarray,
    n1: int,
    spec: KernelSpec | None = None,
    T: int = 10,
    landmarks: int = 200,
    seed=0,
) -> StatisticValue:
    """Approximate truncated KFDA statistic from ``landmarks`` sampled cells.

    The bandwidth (median heuristic) is resolved on the full pooled sample.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    n2 = n - n1
    if landmarks < T:
        raise ValueError(f"landmarks ({landmarks}) must be >= truncation ({T})")
    if T < 1:
        raise TruncationError("truncation must be >= 1")
    spec = resolve(x, spec or KernelSpec(), n1)
    rows = choose_landmarks(n1, n2, landmarks, seed)
    phi = nystrom_features(x, spec, rows)
    centered = block_center(phi, n1)
    sigma_w = centered.T @ centered / n
    vals, vecs = np.linalg.eigh(0.5 * (sigma_w + sigma_w.T))
    vals, vecs = vals[::-1], vecs[:, ::-1]
    if vals.size == 0 or not vals[0] > 0:
        raise TruncationError("truncation exceeds spectrum rank (rank=0)")
    keep = vals > RANK_RTOL * vals[0]
    vals, vecs = vals[keep], vecs[:, keep]
    if T > vals.size:
        raise TruncationError(f"truncation exceeds spectrum rank (T={T}, rank={vals.size})")
    delta = phi[n1:].mean(axis=0) - phi[:n1].mean(axis=0)
    proj = vecs[:, :T].T @ delta
    per = (n1 * n2 / n) * proj**2 / vals[:T]
    return StatisticValue(float(per.sum()), per, T, n1, n2)
