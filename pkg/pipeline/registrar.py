import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from config.presets import PRECOMPUTED
from config.settings import settings
from geometry.errors import DegenerateCloudError, DegenerateMatchError
from geometry.sampling import farthest_point_sampling
from geometry.transforms import PointCloud, denormalize_transform, normalize_pair
from pipeline.procrustes import WeightedPairs, weighted_procrustes, weighted_rms
from pipeline.refinement import DenoiseConfig, refined_register
from pipeline.results import PipelineState, RegistrationResult
from services.feature_service import FeatureBackend, FeatureService, FeatureSet, interpolate_features
from services.matching_service import (
    ConsensusMatrix,
    bilateral_consensus,
    similarity_matrix,
    softmax_pool_top_k,
)


@dataclass(frozen=True)
class PipelineConfig:
    """
    input_size: points kept by the first FPS pass, before features
    subsample_chain: FPS schedule applied after features; the last size is
        the number of candidates per side in the consensus matrix
    k: pairs kept by softmax pooling
    temperature: consensus softmax temperature
    refine: run target-guided denoising after the coarse solve
    """
    input_size: int = settings.INPUT_SIZE
    subsample_chain: Tuple[int, ...] = settings.SUBSAMPLE_CHAIN
    k: int = settings.TOP_K
    temperature: float = settings.MATCH_TEMPERATURE
    refine: bool = settings.ENABLE_REFINEMENT
    fps_start: int = settings.FPS_START
    low_confidence_factor: float = settings.LOW_CONFIDENCE_FACTOR
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig.from_settings)

    def __post_init__(self):
        chain = tuple(int(size) for size in self.subsample_chain)
        if not chain or any(size < 1 for size in chain):
            raise ValueError(f"subsample chain must hold positive sizes, got {self.subsample_chain}")
        if any(later > earlier for earlier, later in zip(chain, chain[1:])):
            raise ValueError(f"subsample chain must be non-increasing, got {chain}")
        if self.input_size < chain[-1]:
            raise ValueError(f"input size {self.input_size} is smaller than the match size {chain[-1]}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        object.__setattr__(self, "subsample_chain", chain)

    @property
    def match_size(self) -> int:
        return self.subsample_chain[-1]


@dataclass(frozen=True, eq=False)
class _Side:
    dense: PointCloud
    dense_features: FeatureSet
    sub: PointCloud
    sub_features: FeatureSet


class Registrar:
    """
    Runs the coarse-to-fine pipeline: normalize, sample, describe, match,
    pool, solve, then optionally denoise and solve again.
    """

    def __init__(self, backend: FeatureBackend, cfg: Optional[PipelineConfig] = None,
                 feature_service: Optional[FeatureService] = None):
        self.backend = backend
        self.cfg = cfg or PipelineConfig()
        self.feature_service = feature_service
        self.last_consensus: Optional[ConsensusMatrix] = None

    def _service_for(self, role: int) -> FeatureService:
        backend = self.backend
        if backend.kind == PRECOMPUTED:
            # "file:src.feat,tgt.feat" gives each side its own file
            paths = backend.path.split(",")
            backend = FeatureBackend(PRECOMPUTED, seed=backend.seed, path=paths[min(role, len(paths) - 1)])
        if self.feature_service is not None and backend is self.backend:
            return self.feature_service
        cache_manager = self.feature_service.cache_manager if self.feature_service else None
        return FeatureService(backend, cache_manager)

    def _prepare_side(self, normalized: PointCloud, role: int) -> _Side:
        dense_count = min(self.cfg.input_size, len(normalized))
        dense_indices = farthest_point_sampling(normalized, dense_count, start=self.cfg.fps_start)
        dense = normalized.subset(dense_indices)

        service = self._service_for(role)
        if service.backend.kind == PRECOMPUTED:
            # file rows align with the original cloud, not the sample
            dense_features = service.extract(normalized).subset(dense_indices)
        else:
            dense_features = service.extract(dense)

        chain_indices = np.arange(len(dense))
        for size in self.cfg.subsample_chain:
            stage = dense.subset(chain_indices)
            picked = farthest_point_sampling(stage, min(size, len(stage)), start=self.cfg.fps_start)
            chain_indices = chain_indices[picked]

        return _Side(dense, dense_features, dense.subset(chain_indices), dense_features.subset(chain_indices))

    def _coarse(self, source: PointCloud, target: PointCloud) -> Tuple[RegistrationResult, Optional[_Side], Optional[_Side]]:
        timings: Dict[str, float] = {}
        for name, cloud in (("source", source), ("target", target)):
            if len(cloud) < self.cfg.match_size:
                raise DegenerateCloudError(
                    f"{name} cloud has {len(cloud)} points, the pipeline needs at least {self.cfg.match_size}"
                )
        if self.cfg.k > self.cfg.match_size:
            raise ValueError(f"k={self.cfg.k} exceeds the {self.cfg.match_size} candidates per side")

        try:
            started = time.perf_counter()
            source_n, target_n, source_record, target_record = normalize_pair(source, target)
            timings["normalize"] = time.perf_counter() - started

            started = time.perf_counter()
            source_side = self._prepare_side(source_n, role=0)
            target_side = self._prepare_side(target_n, role=1)
            timings["features"] = time.perf_counter() - started

            started = time.perf_counter()
            consensus = bilateral_consensus(
                similarity_matrix(source_side.sub_features, target_side.sub_features),
                self.cfg.temperature,
            )
            matches = softmax_pool_top_k(consensus, self.cfg.k)
            self.last_consensus = consensus
            timings["matching"] = time.perf_counter() - started

            started = time.perf_counter()
            pairs = WeightedPairs(
                source_side.sub.points[matches.source_indices],
                target_side.sub.points[matches.target_indices],
                matches.confidences,
            )
            coarse_normalized = weighted_procrustes(pairs)
            timings["solve"] = time.perf_counter() - started
        except (DegenerateCloudError, DegenerateMatchError) as e:
            if settings.VERBOSE:
                print(f"❌ Registration failed: {e}")
            return RegistrationResult.failure(str(e), timings), None, None

        max_confidence = float(matches.confidences[0])
        result = RegistrationResult(
            coarse=denormalize_transform(coarse_normalized, source_record, target_record),
            matches=matches,
            residual=weighted_rms(coarse_normalized, pairs) / target_record.scale,
            timings=timings,
            low_confidence=max_confidence < self.cfg.low_confidence_factor * consensus.uniform_level,
            max_confidence=max_confidence,
            state=PipelineState(source_side.sub, target_side.sub, source_record, target_record, coarse_normalized),
        )
        if settings.VERBOSE:
            flag = " ⚠️  low confidence" if result.low_confidence else ""
            print(f"✅ Coarse registration: {matches.k} pairs, residual {result.residual:.6g}{flag}")
        return result, source_side, target_side

    def coarse_register(self, source: PointCloud, target: PointCloud) -> RegistrationResult:
        result, _, _ = self._coarse(source, target)
        return result

    def register(self, source: PointCloud, target: PointCloud) -> RegistrationResult:
        """Coarse registration followed, when configured, by the refined solve."""
        result, source_side, target_side = self._coarse(source, target)
        if not self.cfg.refine or not result.success:
            return result

        # dense features come from up-sampling the subsampled ones
        dense_features = interpolate_features(source_side.sub, source_side.sub_features, source_side.dense)
        target_features = interpolate_features(target_side.sub, target_side.sub_features, target_side.sub)
        refined = refined_register(result, source_side.dense, dense_features, target_features, self.cfg.denoise)
        if settings.VERBOSE and refined.refined is not None:
            print(f"✅ Refined registration: residual {refined.refined_residual:.6g}")
        return refined


def coarse_register(source: PointCloud, target: PointCloud, backend: FeatureBackend,
                    cfg: Optional[PipelineConfig] = None) -> RegistrationResult:
    """Coarse global registration of source onto target at the inputs' original scale."""
    return Registrar(backend, cfg).coarse_register(source, target)


def register(source: PointCloud, target: PointCloud, backend: FeatureBackend,
             cfg: Optional[PipelineConfig] = None) -> RegistrationResult:
    """Coarse plus refined registration."""
    return Registrar(backend, cfg).register(source, target)
