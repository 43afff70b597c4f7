"""Dataset directories and the homophily-controlled synthetic generator.

A dataset directory holds ``manifest.json``, a headerless CSV of node
features, one edge-list file per view (``i j`` per line, 0-based), and an
optional labels file with one integer per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import MultiViewGraph, edges_to_adjacency, homophily_from_labels

MANIFEST = "manifest.json"


class DatasetError(ValueError):
    """A dataset directory is missing a file or its contents are malformed."""


@dataclass
class DatasetManifest:
    name: str
    n: int
    d: int
    k: int
    views: list[str]
    features: str
    labels: str | None = None
    scale_features: bool = True

    @classmethod
    def read(cls, path: Path) -> "DatasetManifest":
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DatasetError(f"{path}: manifest not found") from None
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
        missing = [key for key in ("name", "n", "d", "k", "views", "features") if key not in raw]
        if missing:
            raise DatasetError(f"{path}: missing keys {missing}")
        for key in ("n", "d", "k"):
            if not isinstance(raw[key], int) or raw[key] < 1:
                raise DatasetError(f"{path}: {key!r} must be a positive integer")
        if not isinstance(raw["views"], list) or not raw["views"]:
            raise DatasetError(f"{path}: 'views' must be a non-empty list")
        return cls(
            name=str(raw["name"]),
            n=raw["n"],
            d=raw["d"],
            k=raw["k"],
            views=[str(v) for v in raw["views"]],
            features=str(raw["features"]),
            labels=raw.get("labels"),
            scale_features=bool(raw.get("scale_features", True)),
        )

    def to_json(self) -> str:
        body = {
            "name": self.name,
            "n": self.n,
            "d": self.d,
            "k": self.k,
            "views": self.views,
            "features": self.features,
            "labels": self.labels,
            "scale_features": self.scale_features,
        }
        return json.dumps(body, indent=2) + "\n"


def _lines(path: Path) -> list[str]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DatasetError(f"{path}: file not found") from None
    return text.splitlines()


def _read_features(path: Path, n: int, d: int) -> np.ndarray:
    rows = [ln for ln in _lines(path) if ln.strip()]
    if len(rows) != n:
        raise DatasetError(f"{path}: dimension mismatch, expected {n} rows, found {len(rows)}")
    out = np.empty((n, d))
    for i, ln in enumerate(rows):
        cells = ln.split(",")
        if len(cells) != d:
            raise DatasetError(f"{path}:{i + 1}: dimension mismatch, expected {d} columns, found {len(cells)}")
        try:
            out[i] = [float(c) for c in cells]
        except ValueError:
            raise DatasetError(f"{path}:{i + 1}: non-numeric feature value") from None
    if not np.isfinite(out).all():
        raise DatasetError(f"{path}: features contain NaN or Inf")
    return out


def _read_edges(path: Path, n: int) -> np.ndarray:
    edges = []
    for lineno, ln in enumerate(_lines(path), start=1):
        parts = ln.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: expected 'i j', got {ln!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-integer node id in {ln!r}") from None
        if not (0 <= i < n and 0 <= j < n):
            raise DatasetError(f"{path}:{lineno}: node id out of range [0, {n})")
        edges.append((i, j))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def _read_labels(path: Path, n: int, k: int) -> np.ndarray:
    rows = [ln for ln in _lines(path) if ln.strip()]
    if len(rows) != n:
        raise DatasetError(f"{path}: dimension mismatch, expected {n} labels, found {len(rows)}")
    out = np.empty(n, dtype=np.int64)
    for i, ln in enumerate(rows):
        try:
            out[i] = int(ln.strip())
        except ValueError:
            raise DatasetError(f"{path}:{i + 1}: non-integer label {ln.strip()!r}") from None
        if not 0 <= out[i] < k:
            raise DatasetError(f"{path}:{i + 1}: label {out[i]} outside [0, {k})")
    return out


def minmax_scale(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (x - lo) / span


def load_dataset(directory) -> MultiViewGraph:
    """Parse and validate a dataset directory.

    Edges are symmetrized, deduplicated, and given self-loops.
    """
    root = Path(directory)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    m = DatasetManifest.read(root / MANIFEST)
    x = _read_features(root / m.features, m.n, m.d)
    if m.scale_features:
        x = minmax_scale(x)
    views = [edges_to_adjacency(m.n, _read_edges(root / v, m.n)) for v in m.views]
    labels = _read_labels(root / m.labels, m.n, m.k) if m.labels else None
    return MultiViewGraph(views=views, features=x, labels=labels, name=m.name, n_clusters=m.k)


def write_dataset(graph: MultiViewGraph, directory, k: int | None = None) -> Path:
    """Write ``graph`` in the dataset directory format (features unscaled on reload)."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    k = k if k is not None else (graph.k or 1)
    if graph.labels is not None and graph.labels.max() >= k:
        raise ValueError(f"labels exceed k={k}")
    view_files = [f"view_{v + 1}.txt" for v in range(graph.n_views)]
    m = DatasetManifest(
        name=graph.name,
        n=graph.n,
        d=graph.d,
        k=k,
        views=view_files,
        features="features.csv",
        labels="labels.txt" if graph.labels is not None else None,
        scale_features=False,
    )
    with open(root / m.features, "w", encoding="utf-8", newline="\n") as fh:
        for row in graph.features:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    for fname, a in zip(view_files, graph.views):
        iu, ju = np.nonzero(np.triu(a, k=1))
        with open(root / fname, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{i} {j}\n" for i, j in zip(iu, ju))
    if graph.labels is not None:
        with open(root / m.labels, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{int(y)}\n" for y in graph.labels)
    (root / MANIFEST).write_text(m.to_json(), encoding="utf-8")
    return root


# --- synthetic generation ---------------------------------------------------


class InfeasibleSpecError(ValueError):
    pass


@dataclass
class SynthSpec:
    """Parameters of a synthetic multi-view graph.

    ``homophily`` and ``edges`` give one value per view (a scalar is
    broadcast). Features are Gaussian blobs around scaled simplex vertices,
    squashed through a sigmoid; ``feature_shift`` moves the squash so that
    most entries sit near 0, as in sparse bag-of-words data.
    """

    n: int = 300
    k: int = 3
    views: int = 2
    homophily: list[float] | float = 0.2
    edges: list[int] | int = 1200
    feature_dim: int = 50
    center_separation: float = 3.0
    feature_noise: float = 4.0
    feature_shift: float = 8.0
    seed: int = 42
    name: str = "synthetic"

    def per_view(self) -> tuple[list[float], list[int]]:
        hs = [self.homophily] * self.views if np.isscalar(self.homophily) else list(self.homophily)
        es = [self.edges] * self.views if np.isscalar(self.edges) else list(self.edges)
        if len(hs) != self.views or len(es) != self.views:
            raise ValueError(f"need {self.views} homophily and edge values")
        return [float(h) for h in hs], [int(e) for e in es]

    def validate(self) -> None:
        if self.n < 1 or self.k < 1 or self.k > self.n or self.views < 1 or self.feature_dim < 1:
            raise ValueError("n, k, views, feature_dim must be positive with k <= n")
        hs, es = self.per_view()
        for h in hs:
            if not 0.0 <= h <= 1.0:
                raise ValueError(f"homophily {h} outside [0, 1]")
        for e in es:
            if e < self.n:
                raise ValueError(f"edges per view ({e}) must be at least n ({self.n})")
        if self.center_separation <= 0 or self.feature_noise < 0:
            raise ValueError("center_separation must be > 0 and feature_noise >= 0")


def balanced_labels(n: int, k: int) -> np.ndarray:
    """Contiguous balanced classes; the remainder goes to the earliest classes."""
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    return np.repeat(np.arange(k), sizes)


def _pair_pools(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(labels)
    iu, ju = np.triu_indices(n, k=1)
    iu, ju = iu.astype(np.int32), ju.astype(np.int32)
    same = labels[iu] == labels[ju]
    return np.stack([iu[same], ju[same]], 1), np.stack([iu[~same], ju[~same]], 1)


def _simplex_features(spec: SynthSpec, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # class c lights up its own block of feature columns: the scaled simplex vertex e_c
    blocks = np.arange(spec.feature_dim) % spec.k
    centers = spec.center_separation * (blocks[None, :] == np.arange(spec.k)[:, None])
    raw = centers[labels] + rng.normal(0.0, spec.feature_noise, (spec.n, spec.feature_dim))
    return 1.0 / (1.0 + np.exp(-(raw - spec.feature_shift)))


def generate_synthetic(spec: SynthSpec, out_dir=None) -> MultiViewGraph:
    """Build a graph whose per-view edge homophily is exactly ``round(h E) / E``.

    Intra- and inter-class node pairs are drawn without replacement from
    their pools, so the counts are exact. If ``out_dir`` is given the
    dataset is also written there.
    """
    spec.validate()
    edge_ss, feat_ss = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(edge_ss)
    labels = balanced_labels(spec.n, spec.k)
    intra, inter = _pair_pools(labels)
    hs, es = spec.per_view()
    views = []
    for h, e in zip(hs, es):
        m_intra = int(round(h * e))
        m_inter = e - m_intra
        if m_intra > len(intra) or m_inter > len(inter):
            feasible = _max_feasible_edges(h, len(intra), len(inter))
            raise InfeasibleSpecError(
                f"cannot place {e} edges at homophily {h}: pools hold {len(intra)} intra-class "
                f"and {len(inter)} inter-class pairs; maximum feasible E is {feasible}"
            )
        pick_in = intra[rng.choice(len(intra), m_intra, replace=False)] if m_intra else intra[:0]
        pick_out = inter[rng.choice(len(inter), m_inter, replace=False)] if m_inter else inter[:0]
        views.append(edges_to_adjacency(spec.n, np.concatenate([pick_in, pick_out]).astype(np.int64)))
    x = _simplex_features(spec, labels, np.random.default_rng(feat_ss))
    graph = MultiViewGraph(views=views, features=x, labels=labels, name=spec.name, n_clusters=spec.k)
    if out_dir is not None:
        write_dataset(graph, out_dir, k=spec.k)
    return graph


def _max_feasible_edges(h: float, n_intra: int, n_inter: int) -> int:
    best = 0
    upper = n_intra + n_inter
    # largest E with round(hE) <= n_intra and E - round(hE) <= n_inter
    for e in range(upper, 0, -1):
        mi = int(round(h * e))
        if mi <= n_intra and e - mi <= n_inter:
            best = e
            break
    return best


def measured_homophily(graph: MultiViewGraph) -> list[float]:
    if graph.labels is None:
        raise ValueError("graph has no labels")
    return [homophily_from_labels(a, graph.labels, graph.k) for a in graph.views]
