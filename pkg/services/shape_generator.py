from typing import Callable, Dict

import numpy as np

from geometry.transforms import PointCloud


def _box(rng: np.random.Generator, n: int) -> np.ndarray:
    # unequal side lengths so the box has no 90 degree symmetry
    return rng.uniform(-1.0, 1.0, size=(n, 3)) * np.array([0.5, 0.35, 0.25])


def _blobs(rng: np.random.Generator, n: int) -> np.ndarray:
    centers = np.array([[0.0, 0.0, 0.0], [0.6, 0.1, 0.0], [-0.2, 0.5, 0.2], [0.1, -0.3, 0.45]])
    spreads = np.array([0.12, 0.08, 0.1, 0.06])
    shares = np.array([0.4, 0.25, 0.2, 0.15])
    labels = rng.choice(len(centers), size=n, p=shares)
    return centers[labels] + rng.normal(size=(n, 3)) * spreads[labels, None]


def _lshape(rng: np.random.Generator, n: int) -> np.ndarray:
    # two arms of different length plus a raised block on the long arm's tip
    boxes = np.array([
        [[0.0, 0.0, 0.0], [1.0, 0.2, 0.15]],
        [[0.0, 0.2, 0.0], [0.2, 0.6, 0.15]],
        [[0.8, 0.0, 0.15], [1.0, 0.2, 0.3]],
    ])
    volumes = np.prod(boxes[:, 1] - boxes[:, 0], axis=1)
    labels = rng.choice(len(boxes), size=n, p=volumes / volumes.sum())
    low, high = boxes[labels, 0], boxes[labels, 1]
    return low + rng.uniform(size=(n, 3)) * (high - low)


def _surface(rng: np.random.Generator, n: int) -> np.ndarray:
    # bumpy closed surface, sampled like vertices of a scanned mesh
    theta = np.arccos(rng.uniform(-1.0, 1.0, size=n))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    radius = 0.5 * (1.0 + 0.25 * np.sin(2.0 * theta) * np.cos(3.0 * phi) + 0.15 * np.cos(theta))
    return np.column_stack([
        radius * np.sin(theta) * np.cos(phi),
        0.8 * radius * np.sin(theta) * np.sin(phi),
        radius * np.cos(theta),
    ])


SHAPES: Dict[str, Callable[[np.random.Generator, int], np.ndarray]] = {
    "box": _box,
    "blobs": _blobs,
    "lshape": _lshape,
    "surface": _surface,
}


def generate_shape(shape: str, n: int, seed: int = 0) -> PointCloud:
    """
    Synthetic cloud of n points whose correspondence ids are the row indices.

    Args:
        shape: One of box, blobs, lshape, surface
        n: Number of points
        seed: Generator seed
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape '{shape}', choose from {sorted(SHAPES)}")
    if n < 1:
        raise ValueError(f"shape needs at least one point, got {n}")
    rng = np.random.default_rng(seed)
    return PointCloud(SHAPES[shape](rng, n), label=shape, ids=np.arange(n))


def add_noise(c: PointCloud, sigma: float, seed: int = 0) -> PointCloud:
    """Isotropic Gaussian jitter of standard deviation sigma on every coordinate."""
    if sigma < 0:
        raise ValueError(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return c
    rng = np.random.default_rng(seed)
    return c.with_points(c.points + rng.normal(scale=sigma, size=c.points.shape))
