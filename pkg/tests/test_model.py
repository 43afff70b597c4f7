import numpy as np
import pytest

from doagc import autodiff as ad
from doagc.autodiff import Tape
from doagc.data import SynthSpec, generate_synthetic
from doagc.graph import MultiViewGraph, edges_to_adjacency
from doagc.model import (
    TrainConfig,
    decode,
    encode,
    forward,
    fuse_views,
    init_params,
    mask_features,
    noise_recovery_loss,
    prior_bias,
    reconstruction_loss,
    total_loss_and_grads,
    train,
    with_overrides,
)

from .conftest import rel_error


def tiny_graph(n=10, d=4, views=2, seed=0):
    r = np.random.default_rng(seed)
    adjs = [edges_to_adjacency(n, r.integers(0, n, (2 * n, 2))) for _ in range(views)]
    return MultiViewGraph(views=adjs, features=r.uniform(0.05, 0.95, (n, d)), labels=r.integers(0, 2, n))


def gradient_errors(graph, cfg, w, seed=0, h=1e-5):
    """Relative error of every parameter's analytic gradient vs central differences."""
    r = np.random.default_rng(seed)
    params = init_params(graph.d, graph.n_views, cfg.hidden_dim, cfg.embed_dim, r, prior_bias(graph.features, cfg.loss_kind))
    x_tildes = [mask_features(graph.features, cfg.mask_rate, r)[0] for _ in graph.views]
    _, grads = total_loss_and_grads(params, graph, cfg, w, x_tildes)
    errors = {}
    for name, value in params.items():
        num = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + h
            fp = float(forward(params, graph, cfg, w, x_tildes).loss.value[0, 0])
            value[idx] = orig - h
            fm = float(forward(params, graph, cfg, w, x_tildes).loss.value[0, 0])
            value[idx] = orig
            num[idx] = (fp - fm) / (2 * h)
        errors[name] = rel_error(grads[name], num)
    return errors


class TestAutoencoder:
    def test_constant_network_outputs_half(self, tape):
        params = init_params(4, 1, 3, 2, np.random.default_rng(0))
        p = {k[3:]: tape.param(np.zeros_like(v)) for k, v in params.items()}
        x = tape.constant(np.ones((5, 4)))
        np.testing.assert_array_equal(decode(p, encode(p, x)).value, 0.5)

    def test_shapes(self, rng, tape):
        params = init_params(7, 1, 5, 3, rng)
        p = {k[3:]: tape.param(v) for k, v in params.items()}
        z = encode(p, tape.constant(rng.uniform(size=(6, 7))))
        assert z.shape == (6, 3) and decode(p, z).shape == (6, 7)

    def test_prior_bias_reproduces_means(self, rng):
        x = rng.uniform(0.1, 0.9, (20, 3))
        b = prior_bias(x, "bce")
        np.testing.assert_allclose(1 / (1 + np.exp(-b)), x.mean(0, keepdims=True), atol=1e-12)
        np.testing.assert_array_equal(prior_bias(x, "mse"), x.mean(0, keepdims=True))

    def test_first_layer_gradient(self, rng):
        x = rng.uniform(0, 1, (6, 4))
        params = init_params(4, 1, 5, 3, rng)

        def loss_of(w1):
            t = Tape()
            p = {k[3:]: t.param(w1 if k == "v0.enc1.w" else v) for k, v in params.items()}
            return p, t, reconstruction_loss(decode(p, encode(p, t.constant(x))), t.constant(x))

        p, t, loss = loss_of(params["v0.enc1.w"])
        g = ad.backward(t, loss)[p["enc1.w"]]
        w1 = params["v0.enc1.w"].copy()
        num = np.zeros_like(w1)
        for idx in np.ndindex(w1.shape):
            up, down = w1.copy(), w1.copy()
            up[idx] += 1e-5
            down[idx] -= 1e-5
            num[idx] = (loss_of(up)[2].value[0, 0] - loss_of(down)[2].value[0, 0]) / 2e-5
        assert rel_error(g, num) < 1e-4


class TestLosses:
    def test_bce_fair_coin(self, tape):
        half = tape.constant(np.full((3, 2), 0.5))
        assert reconstruction_loss(half, half).value[0, 0] == pytest.approx(np.log(2), abs=1e-15)

    def test_mse_perfect(self, rng, tape):
        x = tape.constant(rng.normal(size=(3, 3)))
        assert reconstruction_loss(x, x, "mse").value[0, 0] == 0.0

    def test_bce_hand_value(self, tape):
        out = reconstruction_loss(tape.constant([[0.9]]), tape.constant([[1.0]]))
        assert out.value[0, 0] == pytest.approx(-np.log(0.9), abs=1e-15)

    def test_bce_rejects_targets_outside_unit_interval(self, tape):
        with pytest.raises(ad.DomainError):
            reconstruction_loss(tape.constant([[0.5]]), tape.constant([[1.5]]))

    def test_unknown_kind(self, tape):
        with pytest.raises(ad.ContractError):
            reconstruction_loss(tape.constant([[0.5]]), tape.constant([[0.5]]), "hinge")

    def test_nrec_zero_for_identity_graph_without_mask(self, rng, tape):
        x = tape.constant(rng.normal(size=(5, 3)))
        assert noise_recovery_loss(tape.constant(np.eye(5)), x, x, 3, "mse").value[0, 0] == 0.0

    def test_nrec_lower_when_neighbors_share_features(self, tape):
        # two cliques whose members have identical features
        x = np.repeat([[0.9, 0.1, 0.8], [0.1, 0.7, 0.2]], 4, axis=0)
        blocks = np.kron(np.eye(2), np.ones((4, 4)))
        for seed in range(5):
            x_tilde, _ = mask_features(x, 0.3, np.random.default_rng(seed))
            args = (tape.constant(x_tilde), tape.constant(x), 1)
            assert noise_recovery_loss(tape.constant(blocks), *args).value[0, 0] < noise_recovery_loss(
                tape.constant(np.eye(8)), *args
            ).value[0, 0]


class TestMask:
    def test_zero_rate(self, rng):
        x = rng.uniform(size=(4, 4))
        x_tilde, mask = mask_features(x, 0.0, rng)
        np.testing.assert_array_equal(x_tilde, x)
        np.testing.assert_array_equal(mask, 1.0)

    def test_rate_concentration(self):
        _, mask = mask_features(np.ones((1000, 100)), 0.3, np.random.default_rng(0))
        assert abs((mask == 0).mean() - 0.3) < 0.01

    def test_masked_entries_are_zero(self, rng):
        x = rng.uniform(0.5, 1, (50, 20))
        x_tilde, mask = mask_features(x, 0.5, rng)
        assert (x_tilde[mask == 0] == 0).all() and (x_tilde[mask == 1] == x[mask == 1]).all()

    def test_rate_one_rejected(self, rng):
        with pytest.raises(ad.ContractError):
            mask_features(np.ones((2, 2)), 1.0, rng)


class TestFusion:
    def test_single_view(self, rng):
        h = rng.normal(size=(4, 3))
        fused, alphas = fuse_views([h], rng.normal(size=(4, 3)), 1.0)
        assert alphas == [1.0]
        np.testing.assert_array_equal(fused, h)

    def test_rho_sharpens(self):
        prev = np.array([[1.0, 0.0], [1.0, 0.0]])
        half = np.array([[1.0, np.sqrt(3.0)], [1.0, np.sqrt(3.0)]])  # cosine 0.5
        _, alphas = fuse_views([half, prev.copy()], prev, 2.0)
        np.testing.assert_allclose(alphas, [0.25, 1.0], atol=1e-12)

    def test_rho_zero(self, rng):
        _, alphas = fuse_views([rng.normal(size=(3, 2)) for _ in range(3)], rng.normal(size=(3, 2)), 0.0)
        assert alphas == [1.0, 1.0, 1.0]

    def test_first_epoch_uses_unit_weights(self, rng):
        hs = [rng.normal(size=(3, 2)) for _ in range(2)]
        fused, alphas = fuse_views(hs, None, 1.0)
        assert alphas == [1.0, 1.0]
        np.testing.assert_array_equal(fused, hs[0] + hs[1])


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [{"epochs": 0}, {"order": 0}, {"mask_rate": 1.0}, {"w_init": 1.5}, {"loss_kind": "l1"}, {"use_s": False, "use_a": False}],
    )
    def test_rejected(self, kw):
        with pytest.raises(ad.ContractError):
            TrainConfig(**kw).validate()

    def test_overrides_copy(self):
        cfg = TrainConfig()
        other = with_overrides(cfg, order=5)
        assert cfg.order == 3 and other.order == 5


class TestGradients:
    def test_total_loss_gradient(self):
        cfg = TrainConfig(hidden_dim=5, embed_dim=3)
        errors = gradient_errors(tiny_graph(), cfg, [0.4, 0.7])
        assert max(errors.values()) < 1e-4, errors

    def test_gradient_through_similarity_only(self):
        cfg = TrainConfig(hidden_dim=4, embed_dim=3, use_rec_loss=False, use_a=False, order=2)
        errors = gradient_errors(tiny_graph(seed=3), cfg, [0.5, 0.5], seed=3)
        enc = {k: v for k, v in errors.items() if ".enc" in k}
        assert max(enc.values()) < 1e-4, enc

    def test_mse_gradient(self):
        cfg = TrainConfig(hidden_dim=4, embed_dim=2, loss_kind="mse", lambda_nrec=0.5)
        errors = gradient_errors(tiny_graph(n=8, seed=4), cfg, [0.2, 0.9], seed=4)
        assert max(errors.values()) < 1e-4, errors


@pytest.fixture(scope="module")
def small():
    spec = SynthSpec(n=60, k=3, views=2, homophily=0.3, edges=150, feature_dim=12, seed=3)
    return generate_synthetic(spec)


@pytest.fixture(scope="module")
def small_cfg():
    return TrainConfig(epochs=8, hidden_dim=16, embed_dim=8, kmeans_n_init=3)


class TestTraining:
    def test_deterministic(self, small, small_cfg):
        a, b = train(small, small_cfg), train(small, small_cfg)
        assert a.trace == b.trace
        assert a.h.tobytes() == b.h.tobytes()

    def test_w_in_unit_interval_and_alpha_max_one(self, small, small_cfg):
        res = train(small, small_cfg)
        for rec in res.trace:
            assert all(0.0 <= w <= 1.0 for w in rec.w)
        assert res.trace[0].w == [0.5, 0.5]
        for rec in res.trace[1:]:
            assert max(rec.alpha) == 1.0

    def test_fixed_w_stays_put(self, small, small_cfg):
        res = train(small, with_overrides(small_cfg, fixed_w=True, w_init=0.8))
        assert all(rec.w == [0.8, 0.8] for rec in res.trace)

    def test_nrec_zero_with_identity_graph(self, small):
        g = MultiViewGraph(views=[np.eye(small.n)] * 2, features=small.features, labels=small.labels)
        cfg = TrainConfig(epochs=4, hidden_dim=8, embed_dim=4, mask_rate=0.0, loss_kind="mse", use_s=False, fixed_w=True, w_init=1.0, kmeans_n_init=1)
        assert all(rec.loss_nrec == 0.0 for rec in train(g, cfg).trace)

    def test_without_labels(self, small, small_cfg):
        g = MultiViewGraph(views=small.views, features=small.features, n_clusters=3)
        res = train(g, small_cfg)
        assert res.metrics is None and all(rec.metrics is None for rec in res.trace)

    def test_kmeans_interval(self, small, small_cfg):
        res = train(small, with_overrides(small_cfg, kmeans_interval=3))
        assert [rec.metrics is not None for rec in res.trace] == [e % 3 == 0 for e in range(1, 9)]
        assert res.trace[1].w == res.trace[0].w

    def test_k_required_without_labels(self, small, small_cfg):
        g = MultiViewGraph(views=small.views, features=small.features)
        with pytest.raises(ad.ContractError):
            train(g, small_cfg)

    def test_bce_needs_unit_features(self, small, small_cfg):
        g = MultiViewGraph(views=small.views, features=small.features * 3, labels=small.labels)
        with pytest.raises(ad.DomainError):
            train(g, small_cfg)

    def test_fixture_run(self):
        """Default fixture (h=0.2): loss falls and ACC clears 0.85."""
        res = train(generate_synthetic(SynthSpec(homophily=0.2)), TrainConfig())
        assert res.trace[-1].loss < res.trace[0].loss
        assert res.metrics.acc >= 0.85
