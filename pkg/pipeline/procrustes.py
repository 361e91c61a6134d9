from dataclasses import dataclass

import numpy as np

from geometry.errors import DegenerateMatchError
from geometry.transforms import RigidTransform

# Second singular value of the cross-covariance below this fraction of the
# first means the weighted points lie on a line.
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class WeightedPairs:
    """
    Corresponding source/target points with non-negative weights.

    At least three pairs must carry positive weight.
    """
    source: np.ndarray
    target: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        source = np.asarray(self.source, dtype=float)
        target = np.asarray(self.target, dtype=float)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)

        if source.ndim != 2 or source.shape[1] != 3 or source.shape != target.shape:
            raise ValueError(f"source and target must both be (n, 3), got {source.shape} and {target.shape}")
        if weights.shape[0] != source.shape[0]:
            raise ValueError(f"{weights.shape[0]} weights for {source.shape[0]} pairs")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and non-negative")
        if np.count_nonzero(weights > 0) < 3:
            raise DegenerateMatchError(f"need at least 3 pairs with positive weight, got {np.count_nonzero(weights > 0)}")
        if not weights.sum() > 0:
            raise DegenerateMatchError("weights sum to zero")

        object.__setattr__(self, "source", source)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def source_centroid(self) -> np.ndarray:
        return self.weights @ self.source / self.weights.sum()

    @property
    def target_centroid(self) -> np.ndarray:
        return self.weights @ self.target / self.weights.sum()


def weighted_procrustes(p: WeightedPairs) -> RigidTransform:
    """
    Closed-form minimizer of sum_i w_i ||R x_i + t - y_i||^2.

    Weighted centroids are removed, the weighted cross-covariance is
    decomposed by SVD, and the last singular direction is flipped when the
    product would be a reflection (Kabsch). The translation is the target
    centroid minus the rotated source centroid.

    Args:
        p: Weighted correspondences

    Returns:
        RigidTransform mapping source points onto target points
    """
    source_centroid = p.source_centroid
    target_centroid = p.target_centroid
    centered_source = p.source - source_centroid
    centered_target = p.target - target_centroid

    covariance = (centered_source * p.weights[:, None]).T @ centered_target
    u, singular_values, vt = np.linalg.svd(covariance)
    if singular_values[0] <= 0.0 or singular_values[1] <= RANK_TOL * singular_values[0]:
        raise DegenerateMatchError("weighted correspondences are collinear or coincident, rotation is undetermined")

    correction = np.eye(3)
    correction[2, 2] = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    rotation = vt.T @ correction @ u.T
    translation = target_centroid - rotation @ source_centroid
    return RigidTransform(rotation, translation)


def optimal_translation(rotation: np.ndarray, p: WeightedPairs) -> np.ndarray:
    """Best translation for a fixed rotation: weighted target centroid minus rotated source centroid."""
    return p.target_centroid - np.asarray(rotation) @ p.source_centroid


def alignment_cost(t: RigidTransform, p: WeightedPairs) -> float:
    """Weighted sum of squared residuals sum_i w_i ||R x_i + t - y_i||^2."""
    residuals = p.source @ t.rotation.T + t.translation - p.target
    return float(p.weights @ np.sum(residuals ** 2, axis=1))


def weighted_rms(t: RigidTransform, p: WeightedPairs) -> float:
    """Weighted RMS of the pair residual lengths."""
    return float(np.sqrt(alignment_cost(t, p) / p.weights.sum()))
