"""Graph containers, homophily measurement, and graph reconstruction.

Functions that take ``Tensor`` arguments are differentiable; the rest
work on plain numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, ShapeError, Tensor


@dataclass
class MultiViewGraph:
    """V adjacency matrices over one node set, shared features, optional labels."""

    views: list[np.ndarray]
    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = "graph"
    n_clusters: int | None = None

    def __post_init__(self):
        if not self.views:
            raise ValueError("a MultiViewGraph needs at least one view")
        n = self.features.shape[0]
        for i, a in enumerate(self.views):
            if a.shape != (n, n):
                raise ShapeError(f"view {i} has shape {a.shape}, expected ({n}, {n})")
        if not np.isfinite(self.features).all():
            raise DomainError("features contain NaN or Inf")
        if self.labels is not None and self.labels.shape != (n,):
            raise ShapeError(f"labels have shape {self.labels.shape}, expected ({n},)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def k(self) -> int | None:
        if self.n_clusters is not None:
            return self.n_clusters
        return None if self.labels is None else int(self.labels.max()) + 1


@dataclass
class ViewState:
    """Learned per-view quantities at the end of training."""

    z: np.ndarray
    s: np.ndarray
    a_hat: np.ndarray
    w: float
    h: np.ndarray
    alpha: float = 1.0


def edges_to_adjacency(n: int, edges: np.ndarray) -> np.ndarray:
    """Symmetric binary adjacency with self-loops from an ``(m, 2)`` edge array."""
    a = np.zeros((n, n))
    if len(edges):
        a[edges[:, 0], edges[:, 1]] = 1.0
        a[edges[:, 1], edges[:, 0]] = 1.0
    np.fill_diagonal(a, 1.0)
    return a


def cosine_similarity_graph(z: Tensor, topk: int | None = None) -> Tensor:
    """Pairwise cosine similarity of rows, negatives clamped to zero.

    With ``topk`` set, only the k largest entries of each row survive and
    the result is re-symmetrized by elementwise max.
    """
    zn = ad.row_l2_normalize(z)
    s = ad.relu(zn @ zn.T)
    if topk is None or topk >= s.cols:
        return s
    keep = _topk_mask(s.value, topk)
    return ad.mul(s, z.tape.constant(keep))


def _topk_mask(s: np.ndarray, k: int) -> np.ndarray:
    idx = np.argsort(-s, axis=1, kind="stable")[:, :k]
    mask = np.zeros_like(s)
    np.put_along_axis(mask, idx, 1.0, axis=1)
    return np.maximum(mask, mask.T)


def edge_homophily(a: np.ndarray, labels_onehot: np.ndarray) -> float:
    """Fraction of non-self edge weight joining same-label endpoints.

    For a binary adjacency with unit diagonal this is
    ``sum(A * Y Y^T - I) / sum(A - I)``. Weighted graphs (similarity or
    reconstructed) are handled by excluding the diagonal the same way.
    Returns 0 when there is no off-diagonal weight.
    """
    y = np.asarray(labels_onehot, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != a.shape[0]:
        raise ShapeError(f"labels {y.shape} do not match adjacency {a.shape}")
    if not (np.isin(y, (0.0, 1.0)).all() and (y.sum(axis=1) == 1).all()):
        raise DomainError("label rows must be one-hot")
    if (a < 0).any():
        raise DomainError("adjacency has negative weights")
    off = a.sum() - np.trace(a)
    if off <= 0:
        return 0.0
    same = (a * (y @ y.T)).sum() - np.trace(a)
    return float(same / off)


def homophily_from_labels(a: np.ndarray, labels: np.ndarray, k: int | None = None) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1 if k is None else k
    return edge_homophily(a, np.eye(k)[labels])


def reconstruct(s: Tensor, a: Tensor, w: float) -> Tensor:
    """Blend the similarity graph with the original adjacency: ``S + w A``."""
    if s.shape != a.shape:
        raise ShapeError(f"reconstruct: S {s.shape} vs A {a.shape}")
    if not 0.0 <= w <= 1.0:
        raise DomainError(f"w={w} outside [0, 1]")
    return ad.add(s, ad.scale(a, w))


def aggregate(a_hat: Tensor, x: Tensor, order: int) -> Tensor:
    """Parameter-free GCN propagation ``(D^-1 A_hat)^order x``."""
    if order < 1:
        raise ad.ContractError("order must be >= 1")
    p = ad.row_sum_normalize(a_hat)
    out = x
    for _ in range(order):
        out = p @ out
    return out


def aggregate_array(a_hat: np.ndarray, x: np.ndarray, order: int) -> np.ndarray:
    """Non-differentiable ``aggregate`` for inference paths."""
    if order < 1:
        raise ad.ContractError("order must be >= 1")
    sums = a_hat.sum(axis=1, keepdims=True)
    p = a_hat / np.where(sums > ad.EPS_NORM, sums, ad.EPS_NORM)
    out = x
    for _ in range(order):
        out = p @ out
    return out
