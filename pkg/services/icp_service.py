import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.settings import settings
from geometry.errors import DegenerateCloudError, DegenerateMatchError
from geometry.sampling import NeighborIndex
from geometry.transforms import PointCloud, RigidTransform, compose
from pipeline.procrustes import WeightedPairs, weighted_procrustes
from pipeline.results import RegistrationResult


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = settings.ICP_MAX_ITERATIONS
    convergence_tol: float = settings.ICP_TOLERANCE
    max_correspondence_distance: Optional[float] = settings.ICP_MAX_CORRESPONDENCE_DISTANCE

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be positive, got {self.max_iterations}")
        if not self.convergence_tol > 0:
            raise ValueError(f"convergence_tol must be positive, got {self.convergence_tol}")
        if self.max_correspondence_distance is not None and not self.max_correspondence_distance > 0:
            raise ValueError(f"max_correspondence_distance must be positive, got {self.max_correspondence_distance}")


def _rms_cost(distances: np.ndarray, gate: Optional[float]) -> float:
    """RMS nearest-neighbor distance, each distance capped at the gate when one is set."""
    if gate is not None:
        distances = np.minimum(distances, gate)
    return float(np.sqrt(np.mean(distances ** 2)))


def icp(source: PointCloud, target: PointCloud, cfg: IcpConfig = None) -> RegistrationResult:
    """
    Point-to-point ICP from the identity pose.

    Each iteration pairs every (gated) source point with its nearest target
    point, solves the unit-weight Procrustes problem and applies it. The
    cost is the RMS nearest-neighbor distance after each update, with
    distances capped at the gate when one is set, so it never increases;
    iteration stops when it changes by less than convergence_tol.

    Args:
        source: Cloud to move, at least 3 points
        target: Fixed cloud, at least 3 points
        cfg: Iteration cap, tolerance and optional correspondence gate

    Returns:
        RegistrationResult whose coarse field holds the final transform,
        with iterations and the per-iteration cost history
    """
    cfg = cfg or IcpConfig()
    if len(source) < 3 or len(target) < 3:
        raise DegenerateCloudError(f"ICP needs at least 3 points per cloud, got {len(source)} and {len(target)}")

    started = time.perf_counter()
    index = NeighborIndex(target)
    current = np.array(source.points)
    total = RigidTransform.identity()

    distances, nearest = index.nearest_many(current, 1)
    distances, nearest = distances[:, 0], nearest[:, 0]
    previous_cost = _rms_cost(distances, cfg.max_correspondence_distance)
    cost_history = [previous_cost]
    iterations = 0

    try:
        for _ in range(cfg.max_iterations):
            keep = np.ones(len(current), dtype=bool)
            if cfg.max_correspondence_distance is not None:
                keep = distances <= cfg.max_correspondence_distance

            step = weighted_procrustes(WeightedPairs(current[keep], target.points[nearest[keep]], np.ones(int(keep.sum()))))
            current = current @ step.rotation.T + step.translation
            total = compose(step, total)
            iterations += 1

            distances, nearest = index.nearest_many(current, 1)
            distances, nearest = distances[:, 0], nearest[:, 0]
            cost = _rms_cost(distances, cfg.max_correspondence_distance)
            cost_history.append(cost)

            if abs(previous_cost - cost) < cfg.convergence_tol:
                break
            previous_cost = cost
    except DegenerateMatchError as e:
        return RegistrationResult.failure(f"ICP correspondences degenerate: {e}", {"icp": time.perf_counter() - started})

    if settings.VERBOSE:
        print(f"✅ ICP finished after {iterations} iterations, RMS {cost_history[-1]:.6g}")

    return RegistrationResult(
        coarse=total,
        residual=cost_history[-1],
        timings={"icp": time.perf_counter() - started},
        iterations=iterations,
        cost_history=cost_history,
    )
