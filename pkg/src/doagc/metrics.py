"""Clustering evaluation: ACC, NMI, ARI and F1."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .autodiff import ShapeError


@dataclass
class MetricsBundle:
    acc: float
    nmi: float
    ari: float
    f1: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def hungarian(cost) -> tuple[np.ndarray, float]:
    """Minimum-cost assignment on a square matrix; returns (perm, total cost).

    ``perm[i]`` is the column assigned to row ``i``.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeError(f"cost matrix must be square, got {c.shape}")
    if not np.isfinite(c).all():
        raise ValueError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(c)
    perm = np.empty(c.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm, float(c[rows, cols].sum())


def _check(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.int64).ravel()
    t = np.asarray(truth, dtype=np.int64).ravel()
    if p.shape != t.shape:
        raise ShapeError(f"pred has {p.size} entries, truth has {t.size}")
    return p, t


def contingency(pred, truth) -> np.ndarray:
    """Table of counts with rows indexed by predicted id, columns by true id."""
    p, t = _check(pred, truth)
    _, pi = np.unique(p, return_inverse=True)
    _, ti = np.unique(t, return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def _matched(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    """Relabel ``pred`` onto true ids by the count-maximizing matching.

    Among matchings with equal matched count, the one with the largest sum
    of per-pair F1 wins, so F1 does not depend on label order. Predicted
    clusters left unmatched (more clusters than classes) get ids that
    match no class.
    """
    p, t = _check(pred, truth)
    pu, pi = np.unique(p, return_inverse=True)
    tu, ti = np.unique(t, return_inverse=True)
    size = max(len(pu), len(tu))
    table = np.zeros((size, size), dtype=np.float64)
    np.add.at(table, (pi, ti), 1.0)
    rows, cols = table.sum(1), table.sum(0)
    pair_f1 = 2.0 * table / np.maximum(rows[:, None] + cols[None, :], 1.0)
    # counts are integers and sum(pair_f1) <= size, so this is lexicographic
    score = table + pair_f1 / (size + 1.0)
    perm, _ = hungarian(score.max() - score)
    return perm[pi], ti


def accuracy(pred, truth) -> float:
    mapped, ti = _matched(pred, truth)
    return float((mapped == ti).mean())


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information normalized by the arithmetic mean of entropies."""
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    hp, ht = _entropy(table.sum(1)), _entropy(table.sum(0))
    if hp == 0.0 and ht == 0.0:
        return 1.0
    nz = table > 0
    outer = np.outer(table.sum(1), table.sum(0))
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    denom = 0.5 * (hp + ht)
    return max(0.0, min(1.0, mi / denom)) if denom > 0 else 0.0


def ari(pred, truth) -> float:
    table = contingency(pred, truth)
    n = int(table.sum())

    def comb2(x):
        x = np.asarray(x, dtype=np.float64)
        return x * (x - 1) / 2.0

    index = comb2(table).sum()
    a, b = comb2(table.sum(1)).sum(), comb2(table.sum(0)).sum()
    expected = a * b / comb2(n) if n > 1 else 0.0
    max_index = 0.5 * (a + b)
    if max_index == expected:
        # both partitions trivial in the same way
        return 1.0 if index == max_index else 0.0
    return float((index - expected) / (max_index - expected))


def f1(pred, truth, average: str = "macro") -> float:
    """F1 after Hungarian alignment, averaged over true classes.

    ``average`` is ``"macro"`` (unweighted mean) or ``"weighted"`` (by
    class support).
    """
    mapped, ti = _matched(pred, truth)
    classes = np.unique(ti)
    scores, support = [], []
    for c in classes:
        tp = np.sum((mapped == c) & (ti == c))
        fp = np.sum((mapped == c) & (ti != c))
        fn = np.sum((mapped != c) & (ti == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
        support.append(np.sum(ti == c))
    scores = np.asarray(scores, dtype=np.float64)
    if average == "macro":
        return float(scores.mean())
    if average == "weighted":
        return float((scores * np.asarray(support)).sum() / len(ti))
    raise ValueError(f"unknown average {average!r}")


macro_f1 = f1


def evaluate(pred, truth, f1_average: str = "macro") -> MetricsBundle:
    return MetricsBundle(
        acc=accuracy(pred, truth),
        nmi=nmi(pred, truth),
        ari=ari(pred, truth),
        f1=f1(pred, truth, f1_average),
    )
