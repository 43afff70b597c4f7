"""k-means with k-means++ seeding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError, DomainError, EPS_NORM


@dataclass
class ClusterResult:
    assignments: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int = 0

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def onehot(self) -> np.ndarray:
        return to_onehot(self.assignments, self.k)


def to_onehot(assignments, k: int) -> np.ndarray:
    a = np.asarray(assignments, dtype=np.int64)
    if a.size and (a.min() < 0 or a.max() >= k):
        raise DomainError(f"label out of range [0, {k})")
    return np.eye(k)[a]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a chosen center
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centers[j : j + 1])[:, 0])
    return centers


def _repair_empty(x, labels, centers, dists):
    """Give each empty cluster the point currently farthest from its center."""
    k = centers.shape[0]
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        own = dists[np.arange(len(x)), labels]
        # never strip a singleton cluster
        own = np.where(np.bincount(labels, minlength=k)[labels] > 1, own, -1.0)
        i = int(np.argmax(own))
        labels[i] = j
        centers[j] = x[i]
    return labels


def lloyd(
    x: np.ndarray,
    centers: np.ndarray,
    max_iter: int = 300,
    tol: float = 1e-4,
    inertia_log: list[float] | None = None,
) -> ClusterResult:
    """Lloyd iterations from the given initial centers."""
    centers = centers.copy()
    k = centers.shape[0]
    it = 0
    for it in range(1, max_iter + 1):
        dists = _sq_dists(x, centers)
        labels = dists.argmin(axis=1)
        labels = _repair_empty(x, labels, centers, dists)
        if inertia_log is not None:
            inertia_log.append(float(_sq_dists(x, centers)[np.arange(len(x)), labels].sum()))
        new = np.zeros_like(centers)
        np.add.at(new, labels, x)
        new /= np.bincount(labels, minlength=k)[:, None]
        shift = float(((new - centers) ** 2).sum())
        centers = new
        if shift < tol:
            break
    dists = _sq_dists(x, centers)
    labels = dists.argmin(axis=1)
    labels = _repair_empty(x, labels, centers, dists)
    inertia = float(((x - centers[labels]) ** 2).sum())
    if inertia_log is not None:
        inertia_log.append(inertia)
    return ClusterResult(labels, centers, inertia, it)


def kmeans(
    x: np.ndarray,
    k: int,
    n_init: int = 10,
    max_iter: int = 300,
    tol: float = 1e-4,
    rng: np.random.Generator | int | None = 0,
    normalize: bool = False,
) -> ClusterResult:
    """Best-of-``n_init`` k-means; ties on inertia go to the earliest restart.

    ``tol`` bounds the squared Frobenius shift of the centers between
    iterations. With ``normalize`` the rows of ``x`` are L2-normalized first.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ContractError(f"k={k} must lie in [1, {n}]")
    if normalize:
        x = x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), EPS_NORM)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    best = None
    for _ in range(max(1, n_init)):
        res = lloyd(x, _kmeans_pp(x, k, rng), max_iter, tol)
        if best is None or res.inertia < best.inertia:
            best = res
    return best
