import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from conftest import random_rotation
from geometry.errors import DegenerateMatchError
from geometry.transforms import RigidTransform, rotation_error, translation_error
from pipeline.procrustes import (
    WeightedPairs,
    alignment_cost,
    optimal_translation,
    weighted_procrustes,
    weighted_rms,
)


def test_exact_recovery(rng):
    for _ in range(1000):
        n = int(rng.integers(5, 129))
        source = rng.normal(size=(n, 3))
        truth = RigidTransform(random_rotation(rng), rng.normal(size=3) * 3.0)
        target = source @ truth.rotation.T + truth.translation

        estimate = weighted_procrustes(WeightedPairs(source, target, rng.uniform(0.01, 1.0, size=n)))
        assert rotation_error(truth.rotation, estimate.rotation) < 1e-6
        assert translation_error(truth.translation, estimate.translation) < 1e-9
        assert np.linalg.norm(estimate.rotation.T @ estimate.rotation - np.eye(3)) < 1e-9
        assert abs(np.linalg.det(estimate.rotation) - 1.0) < 1e-9


def test_identity_pairs():
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    estimate = weighted_procrustes(WeightedPairs(points, points, np.ones(4)))
    assert np.allclose(estimate.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(estimate.translation, 0.0, atol=1e-12)


def test_reflection_is_corrected(rng):
    source = rng.normal(size=(20, 3))
    mirrored = source * np.array([1.0, 1.0, -1.0])
    estimate = weighted_procrustes(WeightedPairs(source, mirrored, np.ones(20)))
    assert np.linalg.det(estimate.rotation) == pytest.approx(1.0, abs=1e-9)


def test_zero_weight_pairs_are_ignored(rng):
    source = rng.normal(size=(10, 3))
    truth = RigidTransform(random_rotation(rng), [1.0, 2.0, 3.0])
    target = source @ truth.rotation.T + truth.translation
    target[7:] += 100.0
    weights = np.array([1.0] * 7 + [0.0] * 3)

    estimate = weighted_procrustes(WeightedPairs(source, target, weights))
    assert rotation_error(truth.rotation, estimate.rotation) < 1e-6


def test_beats_random_rotations(rng):
    for _ in range(100):
        n = int(rng.integers(3, 6))
        source = rng.normal(size=(n, 3))
        target = source @ random_rotation(rng).T + rng.normal(size=3) + rng.normal(scale=0.3, size=(n, 3))
        pairs = WeightedPairs(source, target, rng.uniform(0.1, 1.0, size=n))

        best = alignment_cost(weighted_procrustes(pairs), pairs)
        candidates = Rotation.random(10000, int(rng.integers(1 << 31))).as_matrix()

        # with its optimal translation, a rotation's cost only involves centered points
        centered_source = source - pairs.source_centroid
        centered_target = target - pairs.target_centroid
        residuals = np.einsum("kab,nb->kna", candidates, centered_source) - centered_target
        costs = np.einsum("n,kn->k", pairs.weights, np.sum(residuals ** 2, axis=2))
        assert best <= costs.min() + 1e-9

        spot = RigidTransform(candidates[0], optimal_translation(candidates[0], pairs))
        assert alignment_cost(spot, pairs) == pytest.approx(costs[0], rel=1e-9, abs=1e-12)


def test_degenerate_inputs():
    line = np.array([[float(i), 0.0, 0.0] for i in range(5)])
    with pytest.raises(DegenerateMatchError):
        weighted_procrustes(WeightedPairs(line, line, np.ones(5)))
    with pytest.raises(DegenerateMatchError):
        WeightedPairs(line, line, [1.0, 1.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        WeightedPairs(line, line, [1.0, 1.0, 1.0, -1.0, 1.0])
    with pytest.raises(ValueError):
        WeightedPairs(line, line[:4], np.ones(5))


def test_weighted_rms_of_exact_fit(rng):
    source = rng.normal(size=(30, 3))
    truth = RigidTransform(random_rotation(rng), rng.normal(size=3))
    pairs = WeightedPairs(source, source @ truth.rotation.T + truth.translation, np.ones(30))
    assert weighted_rms(weighted_procrustes(pairs), pairs) < 1e-12


def test_quarter_turn_with_offset(rng):
    source = rng.normal(size=(10, 3))
    quarter = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    target = source @ quarter.T + [1.0, 2.0, 3.0]
    estimate = weighted_procrustes(WeightedPairs(source, target, np.ones(10)))
    assert np.allclose(estimate.rotation, quarter, atol=1e-9)
    assert np.allclose(estimate.translation, [1.0, 2.0, 3.0], atol=1e-9)


def test_outlier_with_zero_weight_matches_clean_solve(rng):
    source = rng.normal(size=(5, 3))
    target = source @ random_rotation(rng).T + rng.normal(size=3) + rng.normal(scale=0.05, size=(5, 3))
    clean = weighted_procrustes(WeightedPairs(source, target, np.ones(5)))

    with_outlier = weighted_procrustes(WeightedPairs(
        np.vstack([source, [[50.0, -20.0, 9.0]]]),
        np.vstack([target, [[-70.0, 3.0, 40.0]]]),
        np.array([1.0] * 5 + [0.0]),
    ))
    assert np.allclose(with_outlier.rotation, clean.rotation, atol=1e-12)
    assert np.allclose(with_outlier.translation, clean.translation, atol=1e-12)


def test_weight_scaling_invariance(rng):
    source = rng.normal(size=(40, 3))
    target = source @ random_rotation(rng).T + rng.normal(scale=0.1, size=(40, 3))
    weights = rng.uniform(0.1, 1.0, size=40)
    base = weighted_procrustes(WeightedPairs(source, target, weights))
    for c in (1e-3, 0.5, 7.0, 1e4):
        scaled = weighted_procrustes(WeightedPairs(source, target, weights * c))
        assert np.allclose(scaled.rotation, base.rotation, atol=1e-12)
        assert np.allclose(scaled.translation, base.translation, atol=1e-12)


def test_continuity_in_weights(rng):
    source = rng.normal(size=(128, 3))
    target = source @ random_rotation(rng).T + rng.normal(scale=0.05, size=(128, 3))
    weights = rng.uniform(0.1, 1.0, size=128)
    base = weighted_procrustes(WeightedPairs(source, target, weights))

    nudged = weights.copy()
    nudged[17] += 1e-6
    moved = weighted_procrustes(WeightedPairs(source, target, nudged))
    assert rotation_error(base.rotation, moved.rotation) < 1e-3
