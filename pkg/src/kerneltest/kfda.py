"""Truncated kernel Fisher discriminant statistic and discriminant projections.

Everything is expressed through the pooled Gram matrix ``K`` (condition 1
rows first).  With ``P = diag(P1, P2)`` the block-centering projector and
``omega`` equal to ``+1/n1`` on block 1 and ``-1/n2`` on block 2 (so that
``Phi' omega`` is the difference of empirical mean embeddings), the
within-group covariance shares its nonzero spectrum with
``K_W = P K P / n`` and::

    D2_T = n1 n2 / n^2 * sum_{t<=T} lambda_t^-2 (u_t' P K omega)^2

which equals ``n1 n2 / n * || Sigma_W,T^-1/2 (mu2 - mu1) ||^2`` in feature
space.  The per-cell projections on the discriminant axis are::

    V = -n1 n2 / n^2 * sum_{t<=T} lambda_t^-2 (u_t' P K omega) K P u_t

The leading minus sign orients the axis from condition 1 to condition 2:
``mean(V[block 2]) - mean(V[block 1]) == D2_T`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .kernels import GramMatrix, KernelSpec, gram

__all__ = [
    "NumericalError",
    "TruncationError",
    "CenteringOperators",
    "KfdaModel",
    "StatisticValue",
    "RANK_RTOL",
    "centering",
    "block_center",
    "eigendecompose",
    "kfda_statistic",
    "mmd_statistic",
    "discriminant_projections",
    "kfda_from_data",
    "pairwise_statistics",
]

RANK_RTOL = 1e-12


class NumericalError(RuntimeError):
    """Eigensolver failure or other unrecoverable numerical problem."""


class TruncationError(ValueError):
    """Requested truncation exceeds the numerical rank of the spectrum."""


@dataclass(frozen=True)
class CenteringOperators:
    n1: int
    n2: int
    P: np.ndarray
    omega: np.ndarray

    @property
    def n(self) -> int:
        return self.n1 + self.n2


def centering(n1: int, n2: int) -> CenteringOperators:
    """Block-centering projector ``P`` and mean-difference weights ``omega``."""
    if n1 < 1 or n2 < 1:
        raise ValueError(f"block sizes must be positive, got ({n1}, {n2})")
    n = n1 + n2
    P = np.zeros((n, n))
    P[:n1, :n1] = np.eye(n1) - 1.0 / n1
    P[n1:, n1:] = np.eye(n2) - 1.0 / n2
    omega = np.concatenate([np.full(n1, 1.0 / n1), np.full(n2, -1.0 / n2)])
    return CenteringOperators(n1, n2, P, omega)


def block_center(m: np.ndarray, n1: int) -> np.ndarray:
    """``P @ m`` without forming ``P`` (``m`` a vector or a matrix)."""
    out = np.array(m, dtype=np.float64, copy=True)
    out[:n1] -= out[:n1].mean(axis=0)
    out[n1:] -= out[n1:].mean(axis=0)
    return out


def _omega(n1: int, n2: int) -> np.ndarray:
    return np.concatenate([np.full(n1, 1.0 / n1), np.full(n2, -1.0 / n2)])


@dataclass(frozen=True)
class StatisticValue:
    d2: float
    per_direction: np.ndarray
    T: int
    n1: int
    n2: int

    @property
    def n(self) -> int:
        return self.n1 + self.n2


@dataclass(frozen=True)
class KfdaModel:
    """Spectrum of ``K_W`` plus what is needed to evaluate statistics.

    ``eigenvalues`` are sorted in decreasing order and truncated at the
    numerical rank; ``scores[t] = u_t' P K omega``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    scores: np.ndarray
    gram: GramMatrix = field(repr=False)

    @property
    def rank(self) -> int:
        return self.eigenvalues.size

    @property
    def n1(self) -> int:
        return self.gram.n1

    @property
    def n2(self) -> int:
        return self.gram.n2

    @property
    def n(self) -> int:
        return self.gram.n

    def _check_T(self, T: int) -> None:
        if T < 1:
            raise TruncationError(f"truncation must be >= 1, got {T}")
        if T > self.rank:
            raise TruncationError(
                f"truncation exceeds spectrum rank (T={T}, rank={self.rank})"
            )

    def contributions(self) -> np.ndarray:
        """Per-direction terms of the statistic for every retained direction."""
        n1, n2, n = self.n1, self.n2, self.n
        return (n1 * n2 / n**2) * self.scores**2 / self.eigenvalues**2


def _spectrum(kw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        vals, vecs = np.linalg.eigh(kw)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    vals, vecs = vals[::-1], vecs[:, ::-1]
    top = vals[0] if vals.size else 0.0
    if not top > 0:
        return vals[:0], vecs[:, :0]
    keep = vals > RANK_RTOL * top
    return vals[keep], vecs[:, keep]


def eigendecompose(K: GramMatrix, ops: CenteringOperators | None = None) -> KfdaModel:
    """Symmetric eigendecomposition of ``K_W = P K P / n``.

    Eigenvalues at or below ``1e-12 * lambda_max`` (including negative
    rounding noise) are discarded; the number kept is the model rank.
    """
    n1, n2 = K.n1, K.n2
    if ops is not None and (ops.n1, ops.n2) != (n1, n2):
        raise ValueError("centering operators do not match the Gram block sizes")
    n = n1 + n2
    k = K.values
    pk = block_center(k, n1)
    kw = block_center(pk.T, n1) / n
    kw = 0.5 * (kw + kw.T)
    vals, vecs = _spectrum(kw)
    pk_omega = pk @ _omega(n1, n2)
    scores = vecs.T @ pk_omega
    return KfdaModel(vals, vecs, scores, K)


def kfda_statistic(model: KfdaModel, T: int) -> StatisticValue:
    """Truncated KFDA statistic ``D2_T`` with its per-direction terms."""
    model._check_T(T)
    per = model.contributions()[:T]
    return StatisticValue(float(per.sum()), per, T, model.n1, model.n2)


def mmd_statistic(K: GramMatrix) -> float:
    """Biased (V-statistic) MMD^2 from block means of the Gram matrix."""
    n1 = K.n1
    k = K.values
    value = k[:n1, :n1].mean() + k[n1:, n1:].mean() - 2.0 * k[:n1, n1:].mean()
    return max(float(value), 0.0)


def discriminant_projections(model: KfdaModel, T: int) -> np.ndarray:
    """Projection of every cell on the truncated discriminant axis.

    Oriented so that condition 1 projects lower on average than
    condition 2; the gap between the block means equals ``D2_T``.
    """
    model._check_T(T)
    n1, n2, n = model.n1, model.n2, model.n
    lam = model.eigenvalues[:T]
    u = model.eigenvectors[:, :T]
    coef = model.scores[:T] / lam**2
    kpu = model.gram.values @ block_center(u, n1)
    return -(n1 * n2 / n**2) * (kpu @ coef)


def kfda_from_data(
    x: np.ndarray, n1: int, spec: KernelSpec | None = None
) -> KfdaModel:
    """Gram matrix plus eigendecomposition for pooled rows ``x``."""
    return eigendecompose(gram(x, spec or KernelSpec(), n1))


def pairwise_statistics(
    x: np.ndarray,
    labels: list[str],
    spec: KernelSpec | None = None,
    T: int = 10,
) -> tuple[list[str], np.ndarray]:
    """Matrix of ``D2_T`` between every pair of conditions.

    Each pair is tested on its own: the pooled pair gets its own bandwidth
    and spectrum.  Returns the sorted condition tags and the symmetric
    matrix with a zero diagonal.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    spec = spec or KernelSpec()
    tags = sorted(set(labels))
    if len(tags) < 2:
        raise ValueError("need at least two conditions")
    labels = np.asarray(labels)
    for tag in tags:
        if np.sum(labels == tag) < 2:
            raise ValueError(f"condition {tag!r} has fewer than 2 cells")
    out = np.zeros((len(tags), len(tags)))
    for a, b in combinations(range(len(tags)), 2):
        ia = np.flatnonzero(labels == tags[a])
        ib = np.flatnonzero(labels == tags[b])
        model = kfda_from_data(np.vstack([x[ia], x[ib]]), ia.size, spec)
        out[a, b] = out[b, a] = kfda_statistic(model, T).d2
    return tags, out
