import dataclasses
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from config.settings import settings
from geometry.errors import DegenerateCloudError, DegenerateMatchError
from geometry.sampling import NeighborIndex
from geometry.transforms import PointCloud, apply_transform, denormalize_transform, invert
from pipeline.procrustes import WeightedPairs, weighted_procrustes, weighted_rms
from pipeline.results import RegistrationResult
from services.feature_service import FeatureSet, UNIT_NORM_TOL


@dataclass(frozen=True)
class DenoiseConfig:
    """
    p: neighbors gathered around each matched source point
    temperature: sharpness of the attention softmax over feature distances
    after_coarse: look neighbors up in the coarse-aligned frame
    """
    p: int = settings.DENOISE_NEIGHBORS
    temperature: float = settings.DENOISE_TEMPERATURE
    after_coarse: bool = settings.DENOISE_AFTER_COARSE

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"neighbor count p must be at least 1, got {self.p}")
        if not self.temperature > 0:
            raise ValueError(f"denoise temperature must be positive, got {self.temperature}")

    @classmethod
    def from_settings(cls) -> "DenoiseConfig":
        return cls(settings.DENOISE_NEIGHBORS, settings.DENOISE_TEMPERATURE, settings.DENOISE_AFTER_COARSE)


@dataclass(frozen=True, eq=False)
class NeighborhoodBundle:
    """Neighbor positions (P, 3), their features Q (P, D) and the matched target feature (D,)."""
    points: np.ndarray
    features: np.ndarray
    target_feature: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        features = np.atleast_2d(np.asarray(self.features, dtype=float))
        target_feature = np.asarray(self.target_feature, dtype=float).reshape(-1)

        if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 1:
            raise ValueError(f"neighbor points must be (P, 3) with P >= 1, got {points.shape}")
        if features.shape != (points.shape[0], target_feature.shape[0]):
            raise ValueError(f"neighbor features must be {points.shape[0]}x{target_feature.shape[0]}, got {features.shape}")
        norms = np.linalg.norm(np.vstack([features, target_feature]), axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValueError("bundle features must have unit norm")

        object.__setattr__(self, "points", points)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target_feature", target_feature)


def denoise_weights(b: NeighborhoodBundle, cfg: DenoiseConfig) -> np.ndarray:
    """
    Attention over the neighborhood: softmax of -||Q_j - f_target||^2 / temperature.

    The target feature is broadcast across the P rows of Q.
    """
    difference = b.features - b.target_feature[None, :]
    scores = -np.sum(difference ** 2, axis=1) / cfg.temperature
    return softmax(scores)


def target_guided_denoise(b: NeighborhoodBundle, cfg: DenoiseConfig) -> np.ndarray:
    """Relocate a matched source point to the attention-weighted average of its neighbors."""
    return denoise_weights(b, cfg) @ b.points


def refined_register(coarse: RegistrationResult, source_dense: PointCloud, source_dense_feats: FeatureSet,
                     target_sub_feats: FeatureSet, cfg: DenoiseConfig = None) -> RegistrationResult:
    """
    Denoise every matched source point and re-solve the weighted alignment.

    Args:
        coarse: Successful coarse result carrying matches and pipeline state
        source_dense: Dense source cloud in the same normalized frame as coarse.state
        source_dense_feats: Features index-aligned with source_dense
        target_sub_feats: Features index-aligned with coarse.state.target_sub
        cfg: Neighborhood size, attention temperature and lookup frame

    Returns:
        Copy of coarse with the refined transform filled in
    """
    cfg = cfg or DenoiseConfig.from_settings()
    if not coarse.success or coarse.matches is None or coarse.state is None:
        return coarse
    if cfg.p > len(source_dense):
        raise DegenerateCloudError(f"cannot gather {cfg.p} neighbors from a dense cloud of {len(source_dense)}")
    if len(source_dense_feats) != len(source_dense):
        raise ValueError(f"{len(source_dense_feats)} features for {len(source_dense)} dense points")

    started = time.perf_counter()
    state = coarse.state
    matches = coarse.matches
    matched_source = state.source_sub.points[matches.source_indices]
    matched_target = state.target_sub.points[matches.target_indices]

    lookup = source_dense
    queries = matched_source
    if cfg.after_coarse:
        lookup = apply_transform(state.coarse, source_dense)
        queries = matched_source @ state.coarse.rotation.T + state.coarse.translation

    index = NeighborIndex(lookup)
    denoised = np.empty_like(queries)
    for row, (query, target_index) in enumerate(zip(queries, matches.target_indices)):
        neighbors = index.nearest(query, cfg.p)
        bundle = NeighborhoodBundle(
            lookup.points[neighbors],
            source_dense_feats.vectors[neighbors],
            target_sub_feats.vectors[target_index],
        )
        denoised[row] = target_guided_denoise(bundle, cfg)

    if cfg.after_coarse:
        undo = invert(state.coarse)
        denoised = denoised @ undo.rotation.T + undo.translation

    timings = dict(coarse.timings)
    try:
        pairs = WeightedPairs(denoised, matched_target, matches.confidences)
        refined_normalized = weighted_procrustes(pairs)
    except DegenerateMatchError as e:
        timings["refine"] = time.perf_counter() - started
        return dataclasses.replace(coarse, timings=timings, error=f"refinement skipped: {e}")

    refined = denormalize_transform(refined_normalized, state.source_record, state.target_record)
    timings["refine"] = time.perf_counter() - started
    return dataclasses.replace(
        coarse,
        refined=refined,
        refined_residual=weighted_rms(refined_normalized, pairs) / state.target_record.scale,
        timings=timings,
    )
