from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from config.settings import settings
from geometry.errors import DegenerateCloudError

ORTHONORMAL_TOL = 1e-9
AXIS_ORDER = "xyz"


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    Ordered 3D points with an optional label and optional correspondence ids.

    Args:
        points: (n, 3) array, all coordinates finite, n >= 1
        label: Free-form name (file stem, shape name)
        ids: Integer correspondence id per point; points sharing an id are
            ground-truth correspondences (synthetic data only)
    """
    points: np.ndarray
    label: Optional[str] = None
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        points = _frozen(self.points)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {points.shape}")
        if points.shape[0] < 1:
            raise ValueError("a point cloud needs at least one point")
        if not np.all(np.isfinite(points)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", points)

        if self.ids is not None:
            ids = np.array(self.ids, dtype=np.int64)
            if ids.shape != (points.shape[0],):
                raise ValueError(f"ids must have shape ({points.shape[0]},), got {ids.shape}")
            ids.setflags(write=False)
            object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, indices: Iterable[int]) -> "PointCloud":
        indices = np.asarray(indices, dtype=np.int64)
        ids = None if self.ids is None else self.ids[indices]
        return PointCloud(self.points[indices], label=self.label, ids=ids)

    def with_points(self, points: np.ndarray) -> "PointCloud":
        return PointCloud(points, label=self.label, ids=self.ids)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation (orthonormal, det +1) followed by a translation: p -> R p + t."""
    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = _frozen(self.rotation)
        translation = _frozen(self.translation).reshape(-1)
        if rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rotation.shape}")
        if translation.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {translation.shape}")
        if np.linalg.norm(rotation.T @ rotation - np.eye(3)) > ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @property
    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def to_dict(self) -> Dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "RigidTransform":
        return cls(np.array(data["rotation"], dtype=float), np.array(data["translation"], dtype=float))


@dataclass(frozen=True)
class NormalizationRecord:
    """
    Uniform scale about a centroid: normalized = (p - offset) * scale.
    """
    scale: float
    offset: Tuple[float, float, float]

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"normalization scale must be positive, got {self.scale}")

    def forward(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - np.asarray(self.offset)) * self.scale

    def inverse(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) / self.scale + np.asarray(self.offset)


def apply_transform(t: RigidTransform, c: PointCloud) -> PointCloud:
    """Map every point p of the cloud to R p + t, keeping order, label and ids."""
    return c.with_points(c.points @ t.rotation.T + t.translation)


def compose(t2: RigidTransform, t1: RigidTransform) -> RigidTransform:
    """Transform equal to applying t1 first, then t2."""
    return RigidTransform(t2.rotation @ t1.rotation, t2.rotation @ t1.translation + t2.translation)


def invert(t: RigidTransform) -> RigidTransform:
    return RigidTransform(t.rotation.T, -t.rotation.T @ t.translation)


def rotation_error(r_gt: np.ndarray, r_pred: np.ndarray) -> float:
    """
    Angle in degrees of the relative rotation R_gt^T R_pred.

    Returns:
        Value in [0, 180]; the arccos argument is clamped to [-1, 1]
    """
    cos_angle = (np.trace(np.asarray(r_gt).T @ np.asarray(r_pred)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos_angle, -1.0, 1.0))))


def translation_error(t_gt: np.ndarray, t_pred: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t_pred, dtype=float) - np.asarray(t_gt, dtype=float)))


def _box_scale(points: np.ndarray, offset: np.ndarray) -> float:
    half_extent = np.max(np.abs(points - offset))
    if half_extent == 0.0:
        raise DegenerateCloudError("cloud has zero extent (all points identical)")
    return settings.NORMALIZATION_HALF_EXTENT / half_extent


def normalize_to_box(c: PointCloud) -> Tuple[PointCloud, NormalizationRecord]:
    """
    Center a cloud on its centroid and scale it uniformly into [-2, 2] per axis.

    A single scale (largest centered half-extent over all axes) keeps the
    mapping a similarity, so rigid registration stays valid in the box.

    Args:
        c: Cloud with at least two distinct points

    Returns:
        Normalized cloud and the record that inverts the mapping
    """
    offset = c.points.mean(axis=0)
    record = NormalizationRecord(_box_scale(c.points, offset), tuple(offset.tolist()))
    return c.with_points(record.forward(c.points)), record


def denormalize(c: PointCloud, record: NormalizationRecord) -> PointCloud:
    return c.with_points(record.inverse(c.points))


def normalize_pair(source: PointCloud, target: PointCloud) -> Tuple[PointCloud, PointCloud, NormalizationRecord, NormalizationRecord]:
    """
    Normalize two clouds with their own centroids and one shared scale.

    The shared scale is the smaller of the two single-cloud scales, so both
    clouds fit the box and a rigid motion between the normalized clouds
    stays rigid at original scale.
    """
    source_offset = source.points.mean(axis=0)
    target_offset = target.points.mean(axis=0)
    scale = min(_box_scale(source.points, source_offset), _box_scale(target.points, target_offset))

    source_record = NormalizationRecord(scale, tuple(source_offset.tolist()))
    target_record = NormalizationRecord(scale, tuple(target_offset.tolist()))
    return (
        source.with_points(source_record.forward(source.points)),
        target.with_points(target_record.forward(target.points)),
        source_record,
        target_record,
    )


def denormalize_transform(t: RigidTransform, source_record: NormalizationRecord, target_record: NormalizationRecord) -> RigidTransform:
    """
    Express a transform estimated between normalized clouds at original scale.

    Both records must share the same scale (see normalize_pair).
    """
    if not np.isclose(source_record.scale, target_record.scale, rtol=1e-12, atol=0.0):
        raise ValueError("source and target normalizations must share one scale")
    rotation = t.rotation
    translation = (
        t.translation / target_record.scale
        + np.asarray(target_record.offset)
        - rotation @ np.asarray(source_record.offset)
    )
    return RigidTransform(rotation, translation)


def normalize_transform(t: RigidTransform, source_record: NormalizationRecord, target_record: NormalizationRecord) -> RigidTransform:
    """Inverse of denormalize_transform: original-scale transform in normalized coordinates."""
    rotation = t.rotation
    translation = (
        t.translation - np.asarray(target_record.offset) + rotation @ np.asarray(source_record.offset)
    ) * target_record.scale
    return RigidTransform(rotation, translation)


def axis_rotation(axis: Union[str, np.ndarray], angle_deg: float) -> np.ndarray:
    """Rotation matrix of angle_deg about a named axis ('x', 'y', 'z') or a 3-vector."""
    if isinstance(axis, str):
        vector = np.eye(3)[AXIS_ORDER.index(axis.lower())]
    else:
        vector = np.asarray(axis, dtype=float)
        vector = vector / np.linalg.norm(vector)
    return Rotation.from_rotvec(np.radians(angle_deg) * vector).as_matrix()


def random_rigid_transform(angle_deg: float, axes: Union[str, Iterable[str]] = "z", seed: int = 0,
                           exact: bool = False, translation: Optional[np.ndarray] = None) -> RigidTransform:
    """
    Rotation composed of per-axis rotations applied in x -> y -> z order.

    Args:
        angle_deg: Magnitude in degrees, |angle| <= 180. A negative value is a
            signed level and only meaningful with exact=True
        axes: Subset of 'x', 'y', 'z' (string or iterable)
        seed: Seed for the per-axis angle draw
        exact: Use angle_deg on every axis instead of drawing uniformly
            from [-|angle|, |angle|]
        translation: Optional translation, zero by default

    Returns:
        RigidTransform, deterministic for a fixed seed
    """
    if abs(angle_deg) > 180.0:
        raise ValueError(f"rotation angle must lie in [-180, 180], got {angle_deg}")
    requested = {axis.lower() for axis in axes}
    if not requested:
        raise ValueError("at least one rotation axis is required")
    unknown = requested - set(AXIS_ORDER)
    if unknown:
        raise ValueError(f"unknown rotation axes: {sorted(unknown)}")

    sequence = "".join(axis for axis in AXIS_ORDER if axis in requested)
    if exact:
        angles = np.full(len(sequence), float(angle_deg))
    else:
        rng = np.random.default_rng(seed)
        magnitude = abs(float(angle_deg))
        angles = rng.uniform(-magnitude, magnitude, size=len(sequence))

    # a 1-element array with a 1-axis sequence would be read as a stack of rotations
    euler = float(angles[0]) if len(sequence) == 1 else angles
    rotation = Rotation.from_euler(sequence, euler, degrees=True).as_matrix()
    if translation is None:
        translation = np.zeros(3)
    return RigidTransform(rotation, translation)
