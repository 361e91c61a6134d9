import numpy as np
import pytest
from scipy.spatial.distance import pdist

from geometry.errors import DegenerateCloudError
from geometry.sampling import (
    NeighborIndex,
    distance_matrix,
    farthest_point_sampling,
    p_nearest_neighbors,
    radius_neighbors,
    random_subset,
)
from geometry.transforms import PointCloud

SQUARE = PointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])


def test_fps_all_points():
    picked = farthest_point_sampling(SQUARE, 4, start=0)
    assert sorted(picked.tolist()) == [0, 1, 2, 3]
    assert picked[0] == 0


def test_fps_square_diagonal():
    assert farthest_point_sampling(SQUARE, 2, start=0).tolist() == [0, 3]


def test_fps_tie_goes_to_lowest_index():
    # after (0,0) and (1,1), corners 1 and 2 are equally far
    assert farthest_point_sampling(SQUARE, 3, start=0).tolist() == [0, 3, 1]


def test_fps_greedy_property(rng):
    cloud = PointCloud(rng.uniform(size=(1024, 3)))
    picked = farthest_point_sampling(cloud, 256, start=0)
    assert len(set(picked.tolist())) == 256

    for step in range(1, len(picked)):
        chosen = cloud.points[picked[:step]]
        min_distance = np.min(np.linalg.norm(cloud.points[:, None, :] - chosen[None, :, :], axis=2), axis=1)
        min_distance[picked[:step]] = -np.inf
        assert min_distance[picked[step]] == pytest.approx(np.max(min_distance), abs=1e-12)


def test_fps_precomputed_distances_match(rng):
    cloud = PointCloud(rng.uniform(size=(300, 3)))
    plain = farthest_point_sampling(cloud, 64, start=5)
    cached = farthest_point_sampling(cloud, 64, start=5, distances=distance_matrix(cloud))
    assert np.array_equal(plain, cached)


def test_fps_seeded_start_is_deterministic(rng):
    cloud = PointCloud(rng.uniform(size=(100, 3)))
    first = farthest_point_sampling(cloud, 10, seed=9)
    second = farthest_point_sampling(cloud, 10, seed=9)
    assert np.array_equal(first, second)


def test_fps_is_prefix_stable(rng):
    for _ in range(10):
        cloud = PointCloud(rng.uniform(size=(200, 3)))
        for k in (1, 7, 32):
            shorter = farthest_point_sampling(cloud, k, seed=21)
            longer = farthest_point_sampling(cloud, k + 1, seed=21)
            assert np.array_equal(shorter, longer[:k])


def test_fps_spreads_wider_than_random_subset(rng):
    for seed in range(20):
        cloud = PointCloud(rng.uniform(size=(500, 3)))
        fps = cloud.points[farthest_point_sampling(cloud, 32, seed=seed)]
        drawn = cloud.points[random_subset(cloud, 32, seed=seed)]
        assert pdist(fps).min() >= pdist(drawn).min()


def test_fps_errors():
    with pytest.raises(DegenerateCloudError):
        farthest_point_sampling(SQUARE, 5)
    with pytest.raises(DegenerateCloudError):
        farthest_point_sampling(SQUARE, 0)
    with pytest.raises(ValueError):
        farthest_point_sampling(SQUARE, 2, start=4)


def test_nearest_examples():
    line = PointCloud([[3.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    assert p_nearest_neighbors(line, [3.0, 0.0, 0.0], 1).tolist() == [0]
    assert p_nearest_neighbors(line, [0.0, 0.0, 0.0], 2).tolist() == [1, 2]


def test_nearest_ties_by_index():
    assert p_nearest_neighbors(SQUARE, [0.5, 0.5, 0.0], 2).tolist() == [0, 1]


def test_nearest_matches_brute_force(rng):
    cloud = PointCloud(rng.uniform(size=(1000, 3)))
    index = NeighborIndex(cloud)
    for query in rng.uniform(size=(20, 3)):
        distances = np.linalg.norm(cloud.points - query, axis=1)
        expected = np.lexsort((np.arange(len(cloud)), distances))[:15]
        assert index.nearest(query, 15).tolist() == expected.tolist()


def test_nearest_rejects_large_p():
    with pytest.raises(DegenerateCloudError):
        p_nearest_neighbors(SQUARE, [0.0, 0.0, 0.0], 5)


def test_radius_examples():
    assert radius_neighbors(SQUARE, [0.5, 0.5, 5.0], 0.1).size == 0
    assert radius_neighbors(SQUARE, [0.5, 0.5, 0.0], 1e6).tolist() == [0, 1, 2, 3]


def test_radius_matches_brute_force(rng):
    cloud = PointCloud(rng.uniform(size=(1000, 3)))
    for query in rng.uniform(size=(20, 3)):
        expected = np.flatnonzero(np.linalg.norm(cloud.points - query, axis=1) <= 0.2)
        assert radius_neighbors(cloud, query, 0.2).tolist() == expected.tolist()


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        radius_neighbors(SQUARE, [0.0, 0.0, 0.0], 0.0)


def test_random_subset_examples():
    assert sorted(random_subset(SQUARE, 4, seed=1).tolist()) == [0, 1, 2, 3]
    assert np.array_equal(random_subset(SQUARE, 2, seed=7), random_subset(SQUARE, 2, seed=7))
    with pytest.raises(DegenerateCloudError):
        random_subset(SQUARE, 5)


def test_random_subset_balance():
    counts = np.bincount([random_subset(SQUARE, 1, seed=seed)[0] for seed in range(10000)], minlength=4)
    assert np.all(np.abs(counts / 10000 - 0.25) < 0.02)
