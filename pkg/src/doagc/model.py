"""Per-view autoencoders, the two training losses, view fusion and the training loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, ContractError, DomainError, ShapeError, Tape, Tensor
from .clustering import ClusterResult, kmeans
from .graph import (
    MultiViewGraph,
    ViewState,
    aggregate,
    aggregate_array,
    cosine_similarity_graph,
    edge_homophily,
    reconstruct,
)
from .metrics import MetricsBundle, evaluate

log = logging.getLogger(__name__)

LOSS_KINDS = ("bce", "mse")


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"loss became non-finite ({value}) at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    order: int = 3
    rho: float = 1.0
    mask_rate: float = 0.3
    w_init: float = 0.5
    lambda_nrec: float = 1.0
    hidden_dim: int = 256
    embed_dim: int = 64
    kmeans_interval: int = 1
    seed: int = 42
    loss_kind: str = "bce"
    use_rec_loss: bool = True
    use_nrec_loss: bool = True
    use_s: bool = True
    use_a: bool = True
    # keep w at w_init instead of re-estimating it from pseudo-labels
    fixed_w: bool = False
    # start the decoder output at the feature column means
    prior_init: bool = True
    topk: int | None = None
    kmeans_n_init: int = 10
    kmeans_normalize: bool = False
    f1_average: str = "macro"

    def validate(self) -> None:
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.order < 1:
            raise ContractError("order must be >= 1")
        if not 0.0 <= self.mask_rate < 1.0:
            raise ContractError("mask_rate must lie in [0, 1)")
        if not 0.0 <= self.w_init <= 1.0:
            raise ContractError("w_init must lie in [0, 1]")
        if self.lambda_nrec < 0 or self.rho < 0:
            raise ContractError("lambda_nrec and rho must be >= 0")
        if self.lr <= 0:
            raise ContractError("lr must be > 0")
        if self.hidden_dim < 1 or self.embed_dim < 1 or self.kmeans_interval < 1:
            raise ContractError("hidden_dim, embed_dim and kmeans_interval must be >= 1")
        if self.loss_kind not in LOSS_KINDS:
            raise ContractError(f"loss_kind must be one of {LOSS_KINDS}")
        if not (self.use_s or self.use_a):
            raise ContractError("use_s and use_a cannot both be off: the reconstructed graph would be empty")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    loss_rec: float
    loss_nrec: float
    loss: float
    w: list[float]
    alpha: list[float]
    metrics: MetricsBundle | None = None


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    views: list[ViewState]
    h: np.ndarray
    clusters: ClusterResult
    metrics: MetricsBundle | None
    trace: list[EpochRecord]
    config: TrainConfig
    adam: AdamState = field(default_factory=AdamState)

    @property
    def final_w(self) -> list[float]:
        return [v.w for v in self.views]


# --- parameters -------------------------------------------------------------

_LAYERS = ("enc1", "enc2", "dec1", "dec2")


def init_params(
    d: int,
    n_views: int,
    hidden: int,
    embed: int,
    rng: np.random.Generator,
    output_bias: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Glorot-uniform weights and zero biases for every view's autoencoder.

    ``output_bias`` (shape ``(1, d)``) seeds the last decoder bias, usually
    with the column means of the target in pre-activation space.
    """
    dims = {"enc1": (d, hidden), "enc2": (hidden, embed), "dec1": (embed, hidden), "dec2": (hidden, d)}
    params = {}
    for v in range(n_views):
        for layer in _LAYERS:
            fan_in, fan_out = dims[layer]
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            params[f"v{v}.{layer}.w"] = rng.uniform(-bound, bound, (fan_in, fan_out))
            params[f"v{v}.{layer}.b"] = np.zeros((1, fan_out))
        if output_bias is not None:
            params[f"v{v}.dec2.b"] = np.array(output_bias, dtype=np.float64).reshape(1, d)
    return params


def prior_bias(x: np.ndarray, loss_kind: str) -> np.ndarray:
    """Decoder output bias that reproduces the column means of ``x``."""
    mean = x.mean(axis=0, keepdims=True)
    if loss_kind == "mse":
        return mean
    p = np.clip(mean, 1e-4, 1 - 1e-4)
    return np.log(p / (1 - p))


def _view_params(params: dict[str, Tensor], v: int) -> dict[str, Tensor]:
    prefix = f"v{v}."
    return {k[len(prefix):]: t for k, t in params.items() if k.startswith(prefix)}


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.cols != w.rows:
        raise ShapeError(f"linear: input {x.shape} vs weight {w.shape}")
    ones = x.tape.constant(np.ones((x.rows, 1)))
    return x @ w + ones @ b


def encode(p: dict[str, Tensor], x: Tensor) -> Tensor:
    """Two-layer encoder: ``linear(relu(linear(x)))``."""
    return _linear(ad.relu(_linear(x, p["enc1.w"], p["enc1.b"])), p["enc2.w"], p["enc2.b"])


def decode(p: dict[str, Tensor], z: Tensor, loss_kind: str = "bce") -> Tensor:
    """Mirror of ``encode``; sigmoid output for bce, identity for mse."""
    out = _linear(ad.relu(_linear(z, p["dec1.w"], p["dec1.b"])), p["dec2.w"], p["dec2.b"])
    return ad.sigmoid(out) if loss_kind == "bce" else out


# --- losses -----------------------------------------------------------------


def reconstruction_loss(x_hat: Tensor, x: Tensor, kind: str = "bce") -> Tensor:
    """Mean binary cross-entropy (or squared error) of ``x_hat`` against ``x``."""
    if x_hat.shape != x.shape:
        raise ShapeError(f"loss: prediction {x_hat.shape} vs target {x.shape}")
    scale = 1.0 / x.value.size
    if kind == "mse":
        diff = x_hat - x
        return ad.scale(ad.sum_all(ad.mul(diff, diff)), scale)
    if kind != "bce":
        raise ContractError(f"unknown loss kind {kind!r}")
    if (x.value < 0).any() or (x.value > 1).any():
        raise DomainError("bce targets must lie in [0, 1]; use loss_kind='mse' or scale features")
    ones = x.tape.constant(np.ones(x.shape))
    pos = ad.mul(x, ad.log_safe(x_hat))
    neg = ad.mul(ones - x, ad.log_safe(ones - x_hat))
    return ad.scale(ad.sum_all(pos + neg), -scale)


def mask_features(x: np.ndarray, mask_rate: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Zero each entry independently with probability ``mask_rate``."""
    if not 0.0 <= mask_rate < 1.0:
        raise ContractError("mask_rate must lie in [0, 1)")
    if mask_rate == 0.0:
        return x.copy(), np.ones_like(x)
    mask = (rng.random(x.shape) >= mask_rate).astype(np.float64)
    return x * mask, mask


def noise_recovery_loss(a_hat: Tensor, x_tilde: Tensor, x: Tensor, order: int, kind: str = "bce") -> Tensor:
    """Loss of features recovered by propagating masked features over ``a_hat``.

    Propagation is row-stochastic, so recovered [0, 1] features stay in
    [0, 1] and are scored directly, without an output squash.
    """
    if x_tilde.shape != x.shape or a_hat.shape != (x.rows, x.rows):
        raise ShapeError(f"noise recovery: A_hat {a_hat.shape}, X~ {x_tilde.shape}, X {x.shape}")
    return reconstruction_loss(aggregate(a_hat, x_tilde, order), x, kind)


def fuse_views(hs: list[np.ndarray], h_prev: np.ndarray | None, rho: float) -> tuple[np.ndarray, list[float]]:
    """Weighted sum of view embeddings; weights from agreement with ``h_prev``.

    Agreement is the mean row-wise cosine between a view embedding and the
    previous consensus, clamped to [1e-12, 1]; weights are agreement over
    the best agreement, raised to ``rho``.
    """
    if not hs:
        raise ContractError("fuse_views needs at least one view")
    if h_prev is None:
        alphas = [1.0] * len(hs)
    else:
        evas = np.array([_mean_row_cosine(h, h_prev) for h in hs])
        evas = np.clip(evas, ad.EPS_NORM, 1.0)
        alphas = [float(a) for a in (evas / evas.max()) ** rho]
    fused = np.zeros_like(hs[0])
    for a, h in zip(alphas, hs):
        fused = fused + a * h
    return fused, alphas


def _mean_row_cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.maximum(np.linalg.norm(a, axis=1), ad.EPS_NORM)
    nb = np.maximum(np.linalg.norm(b, axis=1), ad.EPS_NORM)
    return float(((a * b).sum(1) / (na * nb)).mean())


# --- forward pass -----------------------------------------------------------


@dataclass
class Forward:
    tape: Tape
    params: dict[str, Tensor]
    loss: Tensor
    loss_rec: Tensor
    loss_nrec: Tensor
    z: list[np.ndarray]
    s: list[np.ndarray]
    a_hat: list[np.ndarray]
    h: list[np.ndarray]


def forward(
    params: dict[str, np.ndarray],
    graph: MultiViewGraph,
    cfg: TrainConfig,
    w: list[float],
    x_tildes: list[np.ndarray],
) -> Forward:
    """One full differentiable pass over every view.

    ``x_tildes`` holds one masked copy of the features per view.
    """
    tape = Tape()
    tp = {name: tape.param(val) for name, val in params.items()}
    x = tape.constant(graph.features)
    zero = tape.constant(np.zeros((1, 1)))
    loss_rec, loss_nrec = zero, zero
    zs, ss, a_hats, hs = [], [], [], []
    for v, adj in enumerate(graph.views):
        p = _view_params(tp, v)
        z = encode(p, x)
        x_hat = decode(p, z, cfg.loss_kind)
        loss_rec = loss_rec + reconstruction_loss(x_hat, x, cfg.loss_kind)

        if cfg.use_s:
            s = cosine_similarity_graph(z, cfg.topk)
        else:
            s = tape.constant(np.zeros(adj.shape))
        a_hat = reconstruct(s, tape.constant(adj), w[v] if cfg.use_a else 0.0)
        loss_nrec = loss_nrec + noise_recovery_loss(
            a_hat, tape.constant(x_tildes[v]), x, cfg.order, cfg.loss_kind
        )
        zs.append(z.value)
        ss.append(s.value)
        a_hats.append(a_hat.value)
        hs.append(aggregate_array(a_hat.value, z.value, cfg.order))

    total = zero
    if cfg.use_rec_loss:
        total = total + loss_rec
    if cfg.use_nrec_loss:
        total = total + ad.scale(loss_nrec, cfg.lambda_nrec)
    return Forward(tape, tp, total, loss_rec, loss_nrec, zs, ss, a_hats, hs)


def total_loss_and_grads(params, graph, cfg, w, x_tildes) -> tuple[float, dict[str, np.ndarray]]:
    fw = forward(params, graph, cfg, w, x_tildes)
    grads = ad.backward(fw.tape, fw.loss)
    return float(fw.loss.value[0, 0]), {name: grads[t] for name, t in fw.params.items()}


# --- training ---------------------------------------------------------------


def _pseudo_weights(graph: MultiViewGraph, onehot: np.ndarray) -> list[float]:
    return [edge_homophily(a, onehot) for a in graph.views]


def train(graph: MultiViewGraph, cfg: TrainConfig, k: int | None = None) -> TrainResult:
    """Fit the per-view autoencoders and cluster the fused embedding.

    Each epoch: encode every view, build ``A_hat = S + w A``, propagate to
    view embeddings, fuse them into ``H``, cluster ``H`` to refresh the
    pseudo-labels and each view's ``w``, then take one Adam step on
    ``L_rec + lambda * L_nrec``. ``w`` and the pseudo-labels are held
    constant during backpropagation.
    """
    cfg.validate()
    k = graph.k if k is None else k
    if k is None:
        raise ContractError("cluster count k is required when the graph has no labels")
    if not 1 <= k <= graph.n:
        raise ContractError(f"k={k} must lie in [1, {graph.n}]")
    if cfg.loss_kind == "bce" and (graph.features.min() < 0 or graph.features.max() > 1):
        raise DomainError("bce loss needs features in [0, 1]; enable scale_features or use mse")

    init_ss, mask_ss, km_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    bias = prior_bias(graph.features, cfg.loss_kind) if cfg.prior_init else None
    params = init_params(
        graph.d, graph.n_views, cfg.hidden_dim, cfg.embed_dim, np.random.default_rng(init_ss), bias
    )
    mask_rng = np.random.default_rng(mask_ss)
    km_rng = np.random.default_rng(km_ss)
    adam = AdamState()

    w = [cfg.w_init] * graph.n_views
    h_prev: np.ndarray | None = None
    trace: list[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        x_tildes = [mask_features(graph.features, cfg.mask_rate, mask_rng)[0] for _ in graph.views]
        fw = forward(params, graph, cfg, w, x_tildes)
        loss = float(fw.loss.value[0, 0])
        if not np.isfinite(loss):
            raise DivergenceError(epoch, loss)
        h, alphas = fuse_views(fw.h, h_prev, cfg.rho)

        metrics = None
        w_used = list(w)
        if epoch % cfg.kmeans_interval == 0:
            res = kmeans(h, k, n_init=cfg.kmeans_n_init, rng=km_rng, normalize=cfg.kmeans_normalize)
            if not cfg.fixed_w:
                w = _pseudo_weights(graph, res.onehot)
            if graph.labels is not None:
                metrics = evaluate(res.assignments, graph.labels, cfg.f1_average)

        grads = ad.backward(fw.tape, fw.loss)
        params = ad.adam_step(params, {n: grads[t] for n, t in fw.params.items()}, adam, lr=cfg.lr)
        trace.append(
            EpochRecord(
                epoch=epoch,
                loss_rec=float(fw.loss_rec.value[0, 0]),
                loss_nrec=float(fw.loss_nrec.value[0, 0]),
                loss=loss,
                w=w_used,
                alpha=alphas,
                metrics=metrics,
            )
        )
        log.debug("epoch %d loss %.6f w %s", epoch, loss, w_used)
        h_prev = h

    # final embedding from the trained weights
    x_tildes = [mask_features(graph.features, 0.0, mask_rng)[0] for _ in graph.views]
    fw = forward(params, graph, cfg, w, x_tildes)
    h, alphas = fuse_views(fw.h, h_prev, cfg.rho)
    clusters = kmeans(h, k, n_init=cfg.kmeans_n_init, rng=km_rng, normalize=cfg.kmeans_normalize)
    metrics = evaluate(clusters.assignments, graph.labels, cfg.f1_average) if graph.labels is not None else None
    views = [
        ViewState(z=fw.z[v], s=fw.s[v], a_hat=fw.a_hat[v], w=w[v], h=fw.h[v], alpha=alphas[v])
        for v in range(graph.n_views)
    ]
    return TrainResult(params, views, h, clusters, metrics, trace, cfg, adam)


def with_overrides(cfg: TrainConfig, **changes) -> TrainConfig:
    return replace(cfg, **changes)
