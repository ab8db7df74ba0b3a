"""Kernel functions, bandwidth selection and pooled Gram matrices.

Three families are supported:

``gauss``
    exp(-||x - y||^2 / (2 sigma^2)), bandwidth from the median heuristic
    by default.
``zi_gauss``
    Probability-product kernel between two zero-inflated Gaussian models,
    one fitted pointwise to each scalar observation (mean = observed
    value, shared sigma, per-cell zero proportion pi)::

        pi pi' + pi (1 - pi') f(0; y, sigma) + (1 - pi) pi' f(0; x, sigma)
               + (1 - pi)(1 - pi') exp(-(x - y)^2 / (4 sigma^2)) / (4 pi sigma^2)

    where f(0; m, sigma) is the normal density at 0 with mean m.  The last
    term is the product kernel between two Gaussians in the 1/(4 pi sigma^2)
    normalization; it is a scalar (per-feature) kernel.
``linear``
    Plain inner product, used mostly as an explicit-feature oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

__all__ = [
    "KernelError",
    "KernelSpec",
    "GramMatrix",
    "median_heuristic",
    "lower_median",
    "eval_gauss",
    "eval_zi_gauss",
    "eval_linear",
    "zi_bandwidth",
    "zero_fractions",
    "resolve",
    "gram",
    "cross_kernel",
]

Family = Literal["gauss", "zi_gauss", "linear"]
Bandwidth = Union[float, Literal["median"]]

_FAMILIES = ("gauss", "zi_gauss", "linear")


class KernelError(ValueError):
    """Invalid kernel parameters or degenerate data for bandwidth selection."""


@dataclass(frozen=True)
class KernelSpec:
    family: Family = "gauss"
    bandwidth: Bandwidth = "median"
    zero_inflation: np.ndarray | None = None

    def __post_init__(self):
        family = self.family.replace("-", "_")
        if family not in _FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", family)
        bw = self.bandwidth
        if bw != "median":
            try:
                bw = float(bw)
            except (TypeError, ValueError):
                raise KernelError(f"bandwidth must be 'median' or a number, got {bw!r}") from None
            if not bw > 0 or not np.isfinite(bw):
                raise KernelError(f"bandwidth must be positive, got {bw}")
            object.__setattr__(self, "bandwidth", bw)
        if self.zero_inflation is not None:
            pi = np.asarray(self.zero_inflation, dtype=np.float64)
            if np.any((pi < 0) | (pi > 1)) or not np.all(np.isfinite(pi)):
                raise KernelError("zero-inflation proportions must lie in [0, 1]")
            object.__setattr__(self, "zero_inflation", pi)

    @property
    def resolved(self) -> bool:
        return self.family == "linear" or self.bandwidth != "median"


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric kernel matrix over the pooled sample, condition 1 first."""

    values: np.ndarray
    n1: int
    n2: int
    spec: KernelSpec | None = None

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def sizes(self) -> tuple[int, int]:
        return self.n1, self.n2

    def permuted(self, order: np.ndarray) -> "GramMatrix":
        """Gram matrix of the rows reordered by ``order`` (same block sizes)."""
        return GramMatrix(self.values[np.ix_(order, order)], self.n1, self.n2, self.spec)


def lower_median(x: np.ndarray) -> float:
    """Median of ``x``, taking the lower middle element for even sizes."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    return float(x[(x.size - 1) // 2])


def median_heuristic(x: np.ndarray) -> float:
    """Median Euclidean distance over all unordered pairs of rows.

    Zero distances from duplicated rows are part of the median.  When more
    than half of the pairs coincide (heavily zero-inflated features) the
    median is 0, which is not a usable bandwidth; the median of the
    positive distances is returned instead.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise KernelError("median heuristic needs at least two observations")
    d = pdist(x)
    if not np.any(d > 0):
        raise KernelError("degenerate data: all pairwise distances are zero")
    sigma = lower_median(d)
    if sigma == 0.0:
        sigma = lower_median(d[d > 0])
    return sigma


def eval_gauss(x, y, sigma: float) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise KernelError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not sigma > 0:
        raise KernelError("sigma must be positive")
    diff = x - y
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma**2)))


def eval_linear(x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise KernelError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.dot(x, y))


def _normal_pdf_at_zero(mean, sigma):
    return np.exp(-0.5 * (mean / sigma) ** 2) / (np.sqrt(2.0 * np.pi) * sigma)


def _zi_gauss_matrix(x: np.ndarray, y: np.ndarray, sigma: float, pi_x, pi_y) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)[:, None]
    y = np.asarray(y, dtype=np.float64)[None, :]
    pi_x = np.broadcast_to(np.asarray(pi_x, dtype=np.float64), x.shape[:1])[:, None]
    pi_y = np.broadcast_to(np.asarray(pi_y, dtype=np.float64), y.shape[1:])[None, :]
    product = np.exp(-((x - y) ** 2) / (4.0 * sigma**2)) / (4.0 * np.pi * sigma**2)
    return (
        pi_x * pi_y
        + pi_x * (1.0 - pi_y) * _normal_pdf_at_zero(y, sigma)
        + (1.0 - pi_x) * pi_y * _normal_pdf_at_zero(x, sigma)
        + (1.0 - pi_x) * (1.0 - pi_y) * product
    )


def eval_zi_gauss(x: float, y: float, sigma: float, pi_x: float, pi_y: float) -> float:
    if not sigma > 0:
        raise KernelError("sigma must be positive")
    for p in (pi_x, pi_y):
        if not 0.0 <= p <= 1.0:
            raise KernelError("zero-inflation proportions must lie in [0, 1]")
    return float(_zi_gauss_matrix(np.array([x]), np.array([y]), sigma, pi_x, pi_y)[0, 0])


def zi_bandwidth(x: np.ndarray) -> float:
    """Median distance between the non-zero observations of a feature.

    Falls back to the pooled median heuristic when fewer than two distinct
    non-zero values exist.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    nz = x[x != 0]
    if nz.size >= 2:
        d = pdist(nz[:, None])
        if np.any(d > 0):
            sigma = lower_median(d)
            return sigma if sigma > 0 else lower_median(d[d > 0])
    return median_heuristic(x)


def zero_fractions(x: np.ndarray, n1: int) -> np.ndarray:
    """Per-cell pi: empirical zero fraction of the cell's condition."""
    x = np.asarray(x, dtype=np.float64).ravel()
    pi = np.empty_like(x)
    pi[:n1] = np.mean(x[:n1] == 0)
    pi[n1:] = np.mean(x[n1:] == 0)
    return pi


def resolve(x: np.ndarray, spec: KernelSpec, n1: int | None = None) -> KernelSpec:
    """Materialize data-dependent defaults (bandwidth, dropout proportions)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if spec.family == "linear":
        return spec
    if spec.family == "gauss":
        if spec.bandwidth == "median":
            return KernelSpec("gauss", median_heuristic(x))
        return spec
    if x.shape[1] != 1:
        raise KernelError("zi_gauss is a scalar kernel; apply it feature by feature")
    bw = zi_bandwidth(x[:, 0]) if spec.bandwidth == "median" else spec.bandwidth
    pi = spec.zero_inflation
    if pi is None:
        if n1 is None:
            raise KernelError("zi_gauss needs block sizes to estimate dropout proportions")
        pi = zero_fractions(x[:, 0], n1)
    else:
        pi = np.broadcast_to(pi, (x.shape[0],)).copy()
    return KernelSpec("zi_gauss", bw, pi)


def _kernel_matrix(x: np.ndarray, spec: KernelSpec) -> np.ndarray:
    if spec.family == "linear":
        return x @ x.T
    if spec.family == "gauss":
        sq = squareform(pdist(x, "sqeuclidean"))
        return np.exp(-sq / (2.0 * spec.bandwidth**2))
    pi = spec.zero_inflation
    return _zi_gauss_matrix(x[:, 0], x[:, 0], spec.bandwidth, pi, pi)


def cross_kernel(x: np.ndarray, rows: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel between all rows of ``x`` and the subset ``x[rows]``.

    ``spec`` must be resolved against ``x`` (see :func:`resolve`); for
    ``zi_gauss`` its per-cell proportions index the rows of ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = x[rows]
    if spec.family == "linear":
        return x @ y.T
    if spec.family == "gauss":
        return np.exp(-cdist(x, y, "sqeuclidean") / (2.0 * spec.bandwidth**2))
    pi = spec.zero_inflation
    return _zi_gauss_matrix(x[:, 0], y[:, 0], spec.bandwidth, pi, pi[rows])


def gram(x: np.ndarray, spec: KernelSpec, n1: int) -> GramMatrix:
    """Gram matrix of the pooled rows ``x`` (first ``n1`` rows = condition 1).

    The bandwidth is resolved first if it is the ``"median"`` sentinel.  The
    upper triangle is mirrored so the result is exactly symmetric.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 <= n1 < n:
        raise KernelError(f"invalid block sizes n1={n1}, n={n}")
    spec = resolve(x, spec, n1)
    k = _kernel_matrix(x, spec)
    upper = np.triu(k)
    k = upper + np.triu(k, 1).T
    if spec.family == "gauss":
        np.fill_diagonal(k, 1.0)
    return GramMatrix(k, n1, n - n1, spec)
