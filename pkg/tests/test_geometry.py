import itertools

import numpy as np
import pytest

from coresel import (
    ArtifactValidationError,
    LabelVector,
    contextual_diversity,
    herding,
    k_center_greedy,
    pairwise_distance,
)

from helpers import make_trace


def labels_of(n, c=2, pattern=None):
    y = np.asarray(pattern) if pattern is not None else np.arange(n) % c
    return LabelVector(y.astype(np.int32), c)


def covering_radius(x, selected):
    d = pairwise_distance(x, x[np.asarray(selected)], "euclidean").values
    return d.min(axis=1).max()


def optimal_radius(x, k):
    n = len(x)
    d = pairwise_distance(x, x, "euclidean").values
    best = np.inf
    for subset in itertools.combinations(range(n), k):
        best = min(best, d[:, list(subset)].min(axis=1).max())
    return best


class TestHerding:
    def test_tie_goes_to_lower_index(self):
        x = np.array([[0.0], [2.0]])
        r = herding(x, labels_of(2), 1)
        assert list(r.indices) == [0]

    def test_identical_features_take_first_k(self):
        x = np.ones((5, 3))
        r = herding(x, labels_of(5), 3)
        assert list(r.indices) == [0, 1, 2]

    def test_picks_point_nearest_mean(self):
        x = np.array([[0.0], [1.0], [5.0]])
        r = herding(x, labels_of(3, 3, [0, 1, 2]), 1)
        assert list(r.indices) == [1]

    def test_first_pick_is_argmin_distance_to_pool_mean(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=(rng.integers(2, 30), 3))
            r = herding(x, labels_of(len(x)), 1)
            # single unbalanced pool: first pick minimizes distance to the mean
            dists = np.linalg.norm(x - x.mean(axis=0), axis=1)
            assert r.indices[0] == np.argmin(dists)

    def test_translation_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(20, 4))
        labels = labels_of(20)
        a = herding(x, labels, 7)
        b = herding(x + 13.5, labels, 7)
        assert np.array_equal(a.indices, b.indices)

    def test_balanced_quotas(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 2))
        labels = labels_of(30, 3)
        r = herding(x, labels, 9, balanced=True)
        assert list(np.bincount(labels.labels[r.indices], minlength=3)) == [3, 3, 3]

    def test_budget_exceeds_pool(self):
        with pytest.raises(ArtifactValidationError):
            herding(np.ones((3, 1)), labels_of(3), 4)


class TestKCenterGreedy:
    def test_forced_initial_farthest_point(self):
        x = np.array([[0.0], [1.0], [2.0], [10.0]])
        labels = labels_of(4)
        r = k_center_greedy(x, labels, 2, initial=0)
        assert list(r.indices) == [0, 3]

    def test_three_centers(self):
        x = np.array([[0.0], [1.0], [2.0], [10.0]])
        r = k_center_greedy(x, labels_of(4), 3, initial=0)
        assert list(r.indices) == [0, 2, 3]

    def test_k_equals_n_any_seed(self):
        x = np.random.default_rng(3).normal(size=(6, 2))
        for seed in range(5):
            r = k_center_greedy(x, labels_of(6), 6, seed=seed)
            assert list(r.indices) == list(range(6))

    def test_two_approximation_every_initial(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            n = int(rng.integers(4, 11))
            k = int(rng.integers(1, 4))
            x = rng.normal(size=(n, 2))
            opt = optimal_radius(x, k)
            for init in range(n):
                r = k_center_greedy(x, labels_of(n), k, initial=init)
                assert covering_radius(x, r.indices) <= 2 * opt + 1e-9

    def test_monotone_radius_prefix(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(15, 3))
        labels = labels_of(15)
        radii = [covering_radius(x, k_center_greedy(x, labels, k, initial=2).indices)
                 for k in range(1, 16)]
        assert all(a >= b - 1e-12 for a, b in zip(radii, radii[1:]))

    def test_translation_invariance(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(12, 2))
        labels = labels_of(12)
        a = k_center_greedy(x, labels, 5, initial=1)
        b = k_center_greedy(x - 42.0, labels, 5, initial=1)
        assert np.array_equal(a.indices, b.indices)

    def test_balanced_uses_per_class_random_init(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(20, 2))
        labels = labels_of(20, 2)
        r = k_center_greedy(x, labels, 10, balanced=True, seed=9)
        assert list(np.bincount(labels.labels[r.indices], minlength=2)) == [5, 5]

    def test_initial_with_balanced_rejected(self):
        with pytest.raises(ArtifactValidationError, match="initial"):
            k_center_greedy(np.ones((4, 1)), labels_of(4), 2, balanced=True, initial=0)

    def test_seed_determinism(self):
        x = np.random.default_rng(8).normal(size=(25, 3))
        labels = labels_of(25)
        a = k_center_greedy(x, labels, 6, seed=123)
        b = k_center_greedy(x, labels, 6, seed=123)
        assert np.array_equal(a.indices, b.indices)


class TestContextualDiversity:
    def test_identical_rows_take_initial_then_lowest(self):
        softmax = np.full((5, 2), 0.5, dtype=np.float32)
        t = make_trace(softmax, [0] * 5)
        r = contextual_diversity(t, labels_of(5, 2, [0, 1, 0, 1, 0]), 3, initial=2)
        assert list(r.indices) == [0, 1, 2]

    def test_second_pick_lands_in_other_cluster(self):
        softmax = np.array(
            [[0.9, 0.1], [0.88, 0.12], [0.1, 0.9], [0.12, 0.88]], dtype=np.float32)
        t = make_trace(softmax, [0, 0, 1, 1])
        r = contextual_diversity(t, labels_of(4), 2, initial=0)
        # brute-force max-min in symmetric KL space
        d = pairwise_distance(softmax.astype(np.float64),
                              softmax.astype(np.float64), "sym_kl").values
        expected = int(np.argmax(d[0]))
        assert set(r.indices) == {0, expected}
        assert expected in (2, 3)

    def test_k_equals_n(self):
        rng = np.random.default_rng(9)
        from helpers import random_softmax
        t = make_trace(random_softmax(rng, 6, 3), [0] * 6)
        r = contextual_diversity(t, labels_of(6, 2, [0, 1] * 3), 6, seed=4)
        assert list(r.indices) == list(range(6))
