import numpy as np
import pytest

from doagc.autodiff import ContractError, DomainError
from doagc.clustering import kmeans, lloyd, to_onehot
from doagc.clustering import _kmeans_pp


class TestKMeans:
    def test_separated_pairs(self):
        x = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]])
        res = kmeans(x, 2, rng=0)
        a = res.assignments
        assert a[0] == a[1] and a[2] == a[3] and a[0] != a[2]
        assert res.inertia == pytest.approx(0.01, abs=1e-12)

    def test_k_equals_n(self, rng):
        x = rng.normal(size=(6, 2))
        res = kmeans(x, 6, rng=1)
        assert res.inertia == pytest.approx(0.0, abs=1e-20)
        assert sorted(res.assignments.tolist()) == list(range(6))

    def test_k_one_is_mean(self, rng):
        x = rng.normal(size=(20, 3))
        np.testing.assert_allclose(kmeans(x, 1).centers[0], x.mean(axis=0), atol=1e-12)

    def test_duplicate_points(self):
        x = np.zeros((5, 2))
        res = kmeans(x, 3, rng=0)
        assert np.bincount(res.assignments, minlength=3).min() >= 1

    def test_deterministic(self, rng):
        x = rng.normal(size=(40, 4))
        a, b = kmeans(x, 3, rng=7), kmeans(x, 3, rng=7)
        np.testing.assert_array_equal(a.assignments, b.assignments)
        assert a.inertia == b.inertia

    @pytest.mark.parametrize("k", [0, 11])
    def test_bad_k(self, k):
        with pytest.raises(ContractError):
            kmeans(np.zeros((10, 2)), k)

    def test_inertia_never_increases(self, rng):
        x = np.concatenate([rng.normal(c, 1.0, (30, 2)) for c in (0, 4, 8)])
        for seed in range(5):
            log = []
            lloyd(x, _kmeans_pp(x, 3, np.random.default_rng(seed)), inertia_log=log)
            assert all(b <= a + 1e-9 for a, b in zip(log, log[1:]))

    def test_relabeling_keeps_inertia(self, rng):
        x = rng.normal(size=(30, 2))
        res = kmeans(x, 3, rng=0)
        perm = np.array([2, 0, 1])
        centers = np.empty_like(res.centers)
        centers[perm] = res.centers
        relabeled = perm[res.assignments]
        assert ((x - centers[relabeled]) ** 2).sum() == pytest.approx(res.inertia, rel=1e-12)

    def test_normalize_uses_direction_only(self):
        x = np.array([[1.0, 0.0], [100.0, 1.0], [0.0, 1.0], [1.0, 50.0]])
        a = kmeans(x, 2, rng=0, normalize=True).assignments
        assert a[0] == a[1] and a[2] == a[3] and a[0] != a[2]


class TestOneHot:
    def test_basic(self):
        assert to_onehot([0, 1], 2).tolist() == [[1, 0], [0, 1]]

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            to_onehot([2], 2)

    def test_gram_has_unit_diagonal(self, rng):
        y = to_onehot(rng.integers(0, 4, 10), 4)
        np.testing.assert_array_equal(np.diag(y @ y.T), 1.0)
