import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfml.data_io import DatasetSpec, generate
from rfml.errors import InvalidDataError, InvalidParameterError
from rfml.evaluation import curvature_histogram, nn_classify, npr, npr_vs_k_sweep, stratified_split

from conftest import unit_sphere


def rotation(rng, D):
    return np.linalg.qr(rng.normal(size=(D, D)))[0]


class TestNpr:
    def test_identity(self, rng):
        X = rng.normal(size=(200, 3))
        r = npr(X, X, 10)
        assert r.value == 1.0 and r.K == 10

    def test_random_permutation(self):
        N, K = 1000, 10
        X = generate(DatasetSpec("swiss_roll", N, 0)).data
        vals = [npr(X, X[np.random.default_rng(s).permutation(N)], K).value for s in range(20)]
        assert abs(np.mean(vals) - K / (N - 1)) <= 0.01

    def test_rigid_motion_and_scale(self, rng):
        X = rng.normal(size=(150, 3))
        Z = rng.normal(size=(150, 2))
        base = npr(X, Z, 8)
        moved = 3.5 * Z @ rotation(rng, 2) + [10.0, -4.0]
        np.testing.assert_array_equal(npr(X, moved, 8).per_point, base.per_point)

    def test_per_point_grid(self, rng):
        r = npr(rng.normal(size=(80, 3)), rng.normal(size=(80, 2)), 5)
        np.testing.assert_allclose(r.per_point * 5, np.round(r.per_point * 5))
        assert r.value == pytest.approx(r.per_point.mean())

    def test_size_mismatch(self, rng):
        with pytest.raises(InvalidDataError):
            npr(rng.normal(size=(10, 2)), rng.normal(size=(9, 2)), 3)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 8))
    def test_in_unit_interval(self, seed, K):
        rng = np.random.default_rng(seed)
        v = npr(rng.normal(size=(30, 3)), rng.normal(size=(30, 2)), K).value
        assert 0.0 <= v <= 1.0


class TestClassify:
    def test_separable(self, rng):
        Z = np.vstack([rng.normal(size=(30, 2)), rng.normal(size=(30, 2)) + 20])
        labels = np.repeat([0, 1], 30)
        r = nn_classify(Z, labels, 3)
        assert r.accuracy == 1.0 and r.per_class == {0: 1.0, 1: 1.0}

    def test_chance_level(self):
        accs = []
        for s in range(20):
            rng = np.random.default_rng(s)
            Z = rng.normal(size=(700, 5))
            labels = rng.integers(0, 10, 700)
            accs.append(nn_classify(Z, labels, s).accuracy)
        assert abs(np.mean(accs) - 0.1) <= 0.05

    def test_deterministic(self, rng):
        Z = rng.normal(size=(100, 3))
        labels = rng.integers(0, 4, 100)
        a, b = nn_classify(Z, labels, 7), nn_classify(Z, labels, 7)
        assert a.accuracy == b.accuracy
        np.testing.assert_array_equal(a.train_index, b.train_index)

    def test_odd_class_extra_to_train(self):
        labels = np.array([0] * 5 + [1] * 4)
        train = stratified_split(labels, 0)
        assert train[:5].sum() == 3 and train[5:].sum() == 2

    def test_counts(self, rng):
        labels = rng.integers(0, 3, 91)
        r = nn_classify(rng.normal(size=(91, 2)), labels, 1)
        assert r.n_train + r.n_test == 91

    def test_singleton_class(self, rng):
        with pytest.raises(InvalidDataError):
            nn_classify(rng.normal(size=(5, 2)), [0, 0, 1, 1, 2], 0)

    def test_rigid_invariance(self, rng):
        Z = rng.normal(size=(120, 3))
        labels = rng.integers(0, 3, 120)
        moved = Z @ rotation(rng, 3) + 5.0
        assert nn_classify(Z, labels, 2).accuracy == nn_classify(moved, labels, 2).accuracy


class TestCurvatureHistogram:
    def test_flat_plane(self):
        h = curvature_histogram(generate(DatasetSpec("plane", 300, 0)), 10, bins=10)
        b = np.searchsorted(h.bin_edges, 0.0, side="right") - 1
        assert h.counts[b] == 300

    def test_sphere_mode(self):
        h = curvature_histogram(unit_sphere(1000), 10, bins=20)
        mode = np.argmax(h.counts)
        assert abs(0.5 * (h.bin_edges[mode] + h.bin_edges[mode + 1]) - 1.0) <= 0.3
        assert h.counts.sum() == 1000 and np.all(np.diff(h.bin_edges) > 0)

    def test_sparse_high_dimensional(self):
        X = np.random.default_rng(0).normal(size=(100, 1024))
        h = curvature_histogram(X, 10)
        assert np.quantile(h.per_point_scalars, 0.9) < 0.01

    def test_permutation_invariant(self):
        X = generate(DatasetSpec("ellipsoid", 300, 0)).data
        perm = np.random.default_rng(0).permutation(300)
        a = curvature_histogram(X, 10, bins=8)
        b = curvature_histogram(X[perm], 10, bins=8)
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_bad_bins(self):
        with pytest.raises(InvalidParameterError):
            curvature_histogram(unit_sphere(50), 5, bins=0)


class TestSweep:
    def test_single_k_shape(self):
        X = generate(DatasetSpec("sphere", 200, 0))
        rows = npr_vs_k_sweep(X, ["pca", "isomap", "lle"], [10])
        assert [r["method"] for r in rows] == ["pca", "isomap", "lle"]

    def test_deterministic(self):
        X = generate(DatasetSpec("ellipsoid", 200, 0))
        assert npr_vs_k_sweep(X, ["lep", "rfml"], [8, 12]) == npr_vs_k_sweep(X, ["lep", "rfml"], [8, 12])

    def test_k_too_large(self):
        with pytest.raises(InvalidParameterError):
            npr_vs_k_sweep(generate(DatasetSpec("sphere", 20, 0)), ["pca"], [20])
