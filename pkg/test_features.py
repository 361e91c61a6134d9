import numpy as np
import pytest

from config.presets import HANDCRAFTED, ORACLE, PRECOMPUTED
from conftest import random_rotation
from geometry.errors import DegenerateCloudError, FeatureFileError
from geometry.transforms import PointCloud, RigidTransform, apply_transform
from services.cache_manager import CacheManager
from services.cloud_io import read_feature_file, write_feature_file
from services.feature_service import (
    FeatureBackend,
    FeatureService,
    FeatureSet,
    extract_features,
    interpolate_features,
    interpolation_weights,
)
from services.shape_generator import generate_shape


def unit(*vector):
    vector = np.asarray(vector, dtype=float)
    return vector / np.linalg.norm(vector)


def test_feature_set_requires_unit_rows():
    with pytest.raises(ValueError):
        FeatureSet([[1.0, 1.0]])
    with pytest.raises(ValueError):
        FeatureSet(np.zeros((2, 0)))
    assert FeatureSet([[0.6, 0.8]]).dim == 2


def test_backend_parse():
    assert FeatureBackend.parse("oracle").kind == ORACLE
    assert FeatureBackend.parse("handcrafted").kind == HANDCRAFTED
    backend = FeatureBackend.parse("file:feats/a.feat")
    assert backend.kind == PRECOMPUTED
    assert backend.path == "feats/a.feat"
    with pytest.raises(ValueError):
        FeatureBackend.parse("learned")
    with pytest.raises(ValueError):
        FeatureBackend(HANDCRAFTED, radii=(0.1, -0.2))


def test_handcrafted_dimension():
    assert FeatureBackend(HANDCRAFTED).descriptor_dim == 36


def test_oracle_matches_rotated_copy(lshape, oracle):
    rotated = apply_transform(RigidTransform(random_rotation(np.random.default_rng(0))), lshape)
    shuffled = rotated.subset(np.random.default_rng(1).permutation(len(lshape)))

    original = extract_features(oracle, lshape)
    moved = extract_features(oracle, shuffled)
    lookup = {int(i): row for row, i in enumerate(lshape.ids)}
    for row, i in enumerate(shuffled.ids):
        assert np.array_equal(moved.vectors[row], original.vectors[lookup[int(i)]])


def test_oracle_vector_independent_of_other_ids(oracle):
    few = PointCloud(np.zeros((2, 3)) + [[0, 0, 0], [1, 0, 0]], ids=[3, 7])
    many = PointCloud(np.arange(30.0).reshape(10, 3), ids=range(10))
    assert np.array_equal(extract_features(oracle, few).vectors[1], extract_features(oracle, many).vectors[7])


def test_oracle_needs_ids(oracle):
    with pytest.raises(ValueError):
        extract_features(oracle, PointCloud(np.zeros((3, 3))))


def test_handcrafted_is_rigid_invariant(handcrafted):
    cloud = generate_shape("lshape", 512, seed=8)
    base = extract_features(handcrafted, cloud).vectors
    rng = np.random.default_rng(21)
    for _ in range(10):
        moved = apply_transform(RigidTransform(random_rotation(rng), rng.normal(size=3) * 5.0), cloud)
        cosine = np.sum(base * extract_features(handcrafted, moved).vectors, axis=1)
        assert np.all(cosine >= 0.999)


def test_handcrafted_isolated_point_is_unit(handcrafted):
    far_apart = PointCloud([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]])
    vectors = extract_features(handcrafted, far_apart).vectors
    assert np.allclose(np.linalg.norm(vectors, axis=1), 1.0)
    assert np.allclose(vectors[:, 0], 1.0)


def test_precomputed_round_trip(tmp_path, rng):
    vectors = rng.normal(size=(20, 5))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    path = write_feature_file(vectors, str(tmp_path / "cloud.feat"))
    assert np.array_equal(read_feature_file(path), vectors)

    loaded = extract_features(FeatureBackend.parse(f"file:{path}"), PointCloud(rng.normal(size=(20, 3))))
    assert np.allclose(loaded.vectors, vectors, atol=1e-15)


def test_precomputed_length_mismatch(tmp_path, rng):
    path = write_feature_file(np.eye(4), str(tmp_path / "short.feat"))
    with pytest.raises(FeatureFileError):
        extract_features(FeatureBackend.parse(f"file:{path}"), PointCloud(rng.normal(size=(5, 3))))


def test_interpolation_coincident_point():
    sub = PointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    feats = FeatureSet(np.eye(4))
    dense = PointCloud([[1.0, 0.0, 0.0]])
    assert np.allclose(interpolate_features(sub, feats, dense).vectors[0], [0.0, 1.0, 0.0, 0.0], atol=1e-6)


def test_interpolation_weights_by_hand():
    sub = PointCloud([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 9.0, 0.0]])
    dense = PointCloud([[0.0, 0.0, 0.0]])
    indices, weights = interpolation_weights(sub, dense)
    assert sorted(indices[0, :2].tolist()) == [0, 1]
    assert indices[0, 2] == 2

    raw = 1.0 / (np.array([1.0, 1.0, 3.0]) + 1e-8)
    assert np.allclose(weights[0], raw / raw.sum(), atol=1e-12)

    feats = FeatureSet([unit(1, 0, 0), unit(0, 1, 0), unit(0, 0, 1), unit(1, 1, 1)])
    expected = unit(*(weights[0] @ feats.vectors[indices[0]]))
    assert np.allclose(interpolate_features(sub, feats, dense).vectors[0], expected, atol=1e-12)


def test_interpolation_of_constant_features(rng):
    sub = PointCloud(rng.normal(size=(10, 3)))
    feats = FeatureSet(np.tile(unit(1, 2, 3), (10, 1)))
    dense = PointCloud(rng.normal(size=(40, 3)))
    assert np.allclose(interpolate_features(sub, feats, dense).vectors, unit(1, 2, 3), atol=1e-12)


def test_interpolation_needs_three_points():
    sub = PointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    with pytest.raises(DegenerateCloudError):
        interpolate_features(sub, FeatureSet(np.eye(2)), PointCloud([[0.5, 0.0, 0.0]]))


def test_feature_service_uses_cache(tmp_path, lshape, handcrafted):
    cache_manager = CacheManager(cache_dir=str(tmp_path), enabled=True)
    service = FeatureService(handcrafted, cache_manager)

    first = service.extract(lshape)
    assert cache_manager.get_cache_stats()["features_cached"] == 1
    second = FeatureService(handcrafted, CacheManager(cache_dir=str(tmp_path), enabled=True)).extract(lshape)
    assert np.array_equal(first.vectors, second.vectors)

    cache_manager.clear_cache()
    assert cache_manager.get_cache_stats()["features_cached"] == 0
