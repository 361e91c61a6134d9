from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.presets import HANDCRAFTED, ORACLE, PRECOMPUTED
from config.settings import settings
from geometry.errors import DegenerateCloudError, FeatureFileError
from geometry.sampling import NeighborIndex
from geometry.transforms import PointCloud
from geometry.utils import unit_rows
from services.cache_manager import CacheManager
from services.cloud_io import read_feature_file

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Unit-norm D-dimensional descriptors, index-aligned with a cloud."""
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=float)
        if vectors.ndim != 2 or vectors.shape[1] < 1:
            raise ValueError(f"feature vectors must have shape (n, D) with D >= 1, got {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("feature vectors must be finite")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValueError("feature vectors must have unit L2 norm")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def subset(self, indices) -> "FeatureSet":
        return FeatureSet(self.vectors[np.asarray(indices, dtype=np.int64)])


@dataclass(frozen=True)
class FeatureBackend:
    """
    Descriptor source standing in for a learned encoder.

    kind is one of oracle (needs correspondence ids), handcrafted
    (rotation-invariant local statistics) or precomputed (feature file).
    """
    kind: str
    seed: int = 0
    dim: int = settings.ORACLE_DIM
    radii: Tuple[float, ...] = settings.FEATURE_RADII
    bins: int = settings.HISTOGRAM_BINS
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in (ORACLE, HANDCRAFTED, PRECOMPUTED):
            raise ValueError(f"unknown feature backend '{self.kind}'")
        if self.kind == ORACLE and self.dim < 1:
            raise ValueError("oracle feature dimension must be at least 1")
        if self.kind == HANDCRAFTED:
            if not self.radii or any(r <= 0 for r in self.radii):
                raise ValueError(f"handcrafted radii must be positive, got {self.radii}")
            if self.bins < 1:
                raise ValueError("handcrafted histogram needs at least one bin")
        if self.kind == PRECOMPUTED and not self.path:
            raise ValueError("precomputed backend needs a feature file path")

    @classmethod
    def parse(cls, spec: str, seed: int = 0) -> "FeatureBackend":
        """Build a backend from a CLI value: oracle, handcrafted or file:<path>."""
        if spec.startswith("file:"):
            return cls(PRECOMPUTED, seed=seed, path=spec[len("file:"):])
        return cls(spec, seed=seed)

    @property
    def signature(self) -> str:
        if self.kind == ORACLE:
            return f"{ORACLE}:seed={self.seed}:dim={self.dim}"
        if self.kind == HANDCRAFTED:
            return f"{HANDCRAFTED}:radii={list(self.radii)}:bins={self.bins}"
        return f"{PRECOMPUTED}:{self.path}"

    @property
    def descriptor_dim(self) -> int:
        if self.kind == HANDCRAFTED:
            return len(self.radii) * (self.bins + 4)
        return self.dim


def oracle_features(ids: np.ndarray, dim: int, seed: int) -> np.ndarray:
    """
    One seeded random unit vector per correspondence id.

    Rows are drawn in id order from a single stream, so the vector of an id
    never depends on which other ids are present.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and ids.min() < 0:
        raise ValueError("correspondence ids must be non-negative")
    rng = np.random.default_rng(seed)
    table = unit_rows(rng.standard_normal((int(ids.max()) + 1, dim)))
    return table[ids]


def handcrafted_features(points: np.ndarray, radii, bins: int) -> np.ndarray:
    """
    Rotation-invariant local descriptor, unit-normalized.

    Per radius: neighbor-distance histogram (bins uniform on [0, r], as
    fractions of the neighbors), covariance eigenvalues sorted descending
    and divided by r^2, and log(1 + neighbor count). An empty neighborhood
    yields zero statistics for that radius.
    """
    cloud = PointCloud(points)
    index = NeighborIndex(cloud)
    descriptors = np.zeros((len(cloud), len(radii) * (bins + 4)))

    for slot, radius in enumerate(radii):
        block = slot * (bins + 4)
        neighborhoods = index.tree.query_ball_point(cloud.points, radius)
        for i, members in enumerate(neighborhoods):
            members = np.asarray(members, dtype=np.int64)
            others = members[members != i]
            if others.size == 0:
                continue

            distances = np.linalg.norm(cloud.points[others] - cloud.points[i], axis=1)
            histogram, _ = np.histogram(distances, bins=bins, range=(0.0, radius))
            descriptors[i, block:block + bins] = histogram / others.size

            local = cloud.points[members]
            covariance = np.cov(local.T, bias=True)
            eigenvalues = np.linalg.eigvalsh(covariance)[::-1]
            descriptors[i, block + bins:block + bins + 3] = np.clip(eigenvalues, 0.0, None) / radius ** 2
            descriptors[i, block + bins + 3] = np.log1p(others.size)

    # isolated points carry no statistics at any radius
    isolated = ~np.any(descriptors, axis=1)
    descriptors[isolated, 0] = 1.0
    return unit_rows(descriptors)


def extract_features(b: FeatureBackend, c: PointCloud) -> FeatureSet:
    """
    Compute one unit-norm descriptor per point of the cloud.

    Args:
        b: Backend choosing the descriptor source
        c: Cloud; the oracle backend additionally needs c.ids

    Returns:
        FeatureSet aligned index-for-index with c
    """
    if b.kind == ORACLE:
        if c.ids is None:
            raise ValueError("oracle backend needs a cloud with correspondence ids")
        return FeatureSet(oracle_features(c.ids, b.dim, b.seed))

    if b.kind == HANDCRAFTED:
        return FeatureSet(handcrafted_features(c.points, b.radii, b.bins))

    vectors = read_feature_file(b.path)
    if vectors.shape[0] != len(c):
        raise FeatureFileError(f"{b.path}: {vectors.shape[0]} feature rows for a cloud of {len(c)} points")
    return FeatureSet(unit_rows(vectors))


def interpolation_weights(sub_points: PointCloud, dense_points: PointCloud, k: int = None, eps: float = None):
    """
    Inverse-distance weights of each dense point over its k nearest subsampled points.

    Returns:
        (indices, weights), both (m, k); each weight row is non-negative and sums to 1
    """
    k = k or settings.INTERPOLATION_NEIGHBORS
    eps = settings.INTERPOLATION_EPS if eps is None else eps
    if len(sub_points) < k:
        raise DegenerateCloudError(f"interpolation needs at least {k} subsampled points, got {len(sub_points)}")

    distances, indices = NeighborIndex(sub_points).nearest_many(dense_points.points, k)
    weights = 1.0 / (distances + eps)
    weights /= weights.sum(axis=1, keepdims=True)
    return indices, weights


def interpolate_features(sub_points: PointCloud, sub_feats: FeatureSet, dense_points: PointCloud) -> FeatureSet:
    """
    Up-sample subsampled descriptors onto dense points by 3-NN inverse-distance weighting.

    A mixture that cancels to zero falls back to the nearest neighbor's descriptor.
    """
    if len(sub_feats) != len(sub_points):
        raise ValueError(f"{len(sub_feats)} features for {len(sub_points)} subsampled points")

    indices, weights = interpolation_weights(sub_points, dense_points)
    mixed = np.einsum("mk,mkd->md", weights, sub_feats.vectors[indices])
    vectors = unit_rows(mixed)

    cancelled = ~np.any(vectors, axis=1)
    vectors[cancelled] = sub_feats.vectors[indices[cancelled, 0]]
    return FeatureSet(vectors)


class FeatureService:
    """
    Extracts descriptors for a backend, reusing cached arrays when enabled.
    """

    def __init__(self, backend: FeatureBackend, cache_manager: Optional[CacheManager] = None):
        self.backend = backend
        self.cache_manager = cache_manager or CacheManager()

    def extract(self, c: PointCloud) -> FeatureSet:
        # file-backed features are already on disk
        if self.backend.kind == PRECOMPUTED or not self.cache_manager.enabled:
            return extract_features(self.backend, c)

        key = self.cache_manager.generate_key(self.backend.signature, c.points, c.ids)
        cached = self.cache_manager.get_cached_features(key)
        if cached is not None and cached.shape == (len(c), self.backend.descriptor_dim):
            return FeatureSet(cached)

        features = extract_features(self.backend, c)
        self.cache_manager.cache_features(key, features.vectors)
        return features
