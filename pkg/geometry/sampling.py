from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from config.settings import settings
from geometry.errors import DegenerateCloudError
from geometry.transforms import PointCloud
from geometry.utils import as_point

# Sorted or greedy-ordered int64 indices into a parent cloud, all distinct.
IndexSubset = np.ndarray

# Widening applied before exact re-ranking, so the tree never drops a tie.
_CANDIDATE_SLACK = 1e-9


def distance_matrix(c: PointCloud) -> np.ndarray:
    """Dense Euclidean distances between all points, reusable across FPS calls."""
    return cdist(c.points, c.points)


def farthest_point_sampling(c: PointCloud, n: int, start: Optional[int] = None, seed: Optional[int] = None,
                            distances: Optional[np.ndarray] = None) -> IndexSubset:
    """
    Greedy farthest point sampling.

    Args:
        c: Parent cloud
        n: Number of indices to select, 1 <= n <= len(c)
        start: First index; defaults to settings.FPS_START, or to a seeded
            random index when seed is given
        seed: Seed for a random start
        distances: Optional precomputed distance matrix of c

    Returns:
        Indices in selection order; each one maximizes the minimum distance
        to those already selected, ties going to the lowest index
    """
    count = len(c)
    if not 1 <= n <= count:
        raise DegenerateCloudError(f"cannot sample {n} points from a cloud of {count}")
    if start is None:
        start = settings.FPS_START if seed is None else int(np.random.default_rng(seed).integers(count))
    if not 0 <= start < count:
        raise ValueError(f"start index {start} out of range for a cloud of {count}")
    if distances is not None and distances.shape != (count, count):
        raise ValueError(f"distance matrix must be {count}x{count}, got {distances.shape}")

    def distances_from(index: int) -> np.ndarray:
        if distances is not None:
            return np.array(distances[index], dtype=float)
        return np.linalg.norm(c.points - c.points[index], axis=1)

    selected = np.empty(n, dtype=np.int64)
    selected[0] = start
    min_distance = distances_from(start)
    min_distance[start] = -np.inf

    for step in range(1, n):
        index = int(np.argmax(min_distance))  # argmax returns the first maximum
        selected[step] = index
        np.minimum(min_distance, distances_from(index), out=min_distance)
        min_distance[selected[: step + 1]] = -np.inf

    return selected


class NeighborIndex:
    """
    Exact neighbor queries over one immutable cloud.

    The k-d tree proposes candidates; final ranking recomputes plain
    Euclidean distances so ties always resolve to the lowest index.
    """

    def __init__(self, c: PointCloud):
        self.points = c.points
        self.tree = cKDTree(c.points)

    def __len__(self) -> int:
        return self.points.shape[0]

    def _distances(self, candidates: np.ndarray, query: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.points[candidates] - query, axis=1)

    def nearest(self, query, p: int) -> IndexSubset:
        """The p closest indices, ascending by distance, ties by index."""
        query = as_point(query)
        if not 1 <= p <= len(self):
            raise DegenerateCloudError(f"cannot return {p} neighbors from a cloud of {len(self)}")

        tree_distances, _ = self.tree.query(query, k=p)
        radius = float(np.atleast_1d(tree_distances)[-1])
        candidates = np.array(
            self.tree.query_ball_point(query, radius * (1.0 + _CANDIDATE_SLACK) + _CANDIDATE_SLACK),
            dtype=np.int64,
        )
        order = np.lexsort((candidates, self._distances(candidates, query)))
        return candidates[order[:p]]

    def within(self, query, r: float) -> IndexSubset:
        """All indices at distance <= r, ascending by index."""
        query = as_point(query)
        if not r > 0:
            raise ValueError(f"radius must be positive, got {r}")

        candidates = np.array(
            self.tree.query_ball_point(query, r * (1.0 + _CANDIDATE_SLACK) + _CANDIDATE_SLACK),
            dtype=np.int64,
        )
        if candidates.size == 0:
            return candidates
        kept = candidates[self._distances(candidates, query) <= r]
        return np.sort(kept)

    def nearest_many(self, queries: np.ndarray, k: int):
        """Batched k-NN straight from the tree (distances, indices), each of shape (m, k)."""
        if not 1 <= k <= len(self):
            raise DegenerateCloudError(f"cannot return {k} neighbors from a cloud of {len(self)}")
        distances, indices = self.tree.query(np.asarray(queries, dtype=float), k=k)
        return distances.reshape(-1, k), indices.reshape(-1, k)


def p_nearest_neighbors(c: PointCloud, query, p: int) -> IndexSubset:
    return NeighborIndex(c).nearest(query, p)


def radius_neighbors(c: PointCloud, query, r: float) -> IndexSubset:
    return NeighborIndex(c).within(query, r)


def random_subset(c: PointCloud, n: int, seed: int = 0) -> IndexSubset:
    """Uniform sample of n distinct indices without replacement, deterministic per seed."""
    count = len(c)
    if not 0 <= n <= count:
        raise DegenerateCloudError(f"cannot draw {n} points from a cloud of {count}")
    rng = np.random.default_rng(seed)
    return rng.choice(count, size=n, replace=False).astype(np.int64)
