import os
import json
from dataclasses import dataclass
from typing import Any, Dict, Union

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError

from config.settings import settings
from geometry.errors import CloudFormatError, FeatureFileError
from geometry.transforms import PointCloud, RigidTransform
from geometry.utils import ensure_parent_directory

XYZ = "xyz"
PLY_ASCII = "ply-ascii"

_EXTENSIONS = {
    ".xyz": XYZ,
    ".txt": XYZ,
    ".pts": XYZ,
    ".ply": PLY_ASCII,
}


@dataclass(frozen=True)
class CloudFile:
    """A point-cloud file on disk and the text format it is stored in."""
    path: str
    format: str

    @classmethod
    def from_path(cls, path: str) -> "CloudFile":
        extension = os.path.splitext(path)[1].lower()
        if extension not in _EXTENSIONS:
            raise CloudFormatError(f"{path}: unrecognized extension '{extension}' (expected .xyz or .ply)")
        return cls(path, _EXTENSIONS[extension])


def _label_for(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _parse_xyz(path: str) -> np.ndarray:
    rows = []
    with open(path, 'r') as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            # extra columns (normals, colors) are ignored
            if len(parts) < 3:
                raise CloudFormatError(f"{path}:{line_number}: expected 3 coordinates, found {len(parts)}")
            try:
                point = [float(value) for value in parts[:3]]
            except ValueError:
                raise CloudFormatError(f"{path}:{line_number}: non-numeric coordinate in '{line}'")
            if not all(np.isfinite(point)):
                raise CloudFormatError(f"{path}:{line_number}: non-finite coordinate in '{line}'")
            rows.append(point)

    if not rows:
        raise CloudFormatError(f"{path}: file contains no points")
    return np.array(rows, dtype=float)


def _parse_ply(path: str) -> np.ndarray:
    try:
        ply = PlyData.read(path)
    except PlyParseError as e:
        raise CloudFormatError(f"{path}: {e}") from e

    if not ply.text:
        raise CloudFormatError(f"{path}: binary PLY is not supported, convert it to ASCII")

    try:
        vertex = ply['vertex']
    except KeyError:
        raise CloudFormatError(f"{path}: no 'vertex' element in header")

    names = {prop.name for prop in vertex.properties}
    missing = [axis for axis in ("x", "y", "z") if axis not in names]
    if missing:
        raise CloudFormatError(f"{path}: vertex element lacks properties {missing}")

    points = np.column_stack([np.asarray(vertex.data[axis], dtype=float) for axis in ("x", "y", "z")])
    if points.shape[0] == 0:
        raise CloudFormatError(f"{path}: file contains no points")
    if not np.all(np.isfinite(points)):
        raise CloudFormatError(f"{path}: non-finite vertex coordinates")
    return points


def parse_cloud(f: Union[CloudFile, str]) -> PointCloud:
    """
    Load a point cloud from an XYZ or ASCII PLY file.

    Args:
        f: CloudFile or a path whose extension selects the format

    Returns:
        PointCloud labelled with the file stem
    """
    if isinstance(f, str):
        f = CloudFile.from_path(f)
    if not os.path.exists(f.path):
        raise CloudFormatError(f"{f.path}: file not found")

    if f.format == XYZ:
        points = _parse_xyz(f.path)
    elif f.format == PLY_ASCII:
        points = _parse_ply(f.path)
    else:
        raise CloudFormatError(f"{f.path}: unsupported format '{f.format}'")

    return PointCloud(points, label=_label_for(f.path))


def write_cloud(c: PointCloud, path: str, precision: int = None) -> str:
    """Write a cloud as XYZ text or ASCII PLY, chosen by extension."""
    f = CloudFile.from_path(path)
    ensure_parent_directory(path)
    precision = precision or settings.XYZ_PRECISION

    if f.format == XYZ:
        np.savetxt(path, c.points, fmt=f"%.{precision}g", delimiter=" ")
    else:
        vertices = np.array(
            [tuple(point) for point in c.points],
            dtype=[('x', 'f8'), ('y', 'f8'), ('z', 'f8')],
        )
        PlyData([PlyElement.describe(vertices, 'vertex')], text=True).write(path)
    return path


def write_json(data: Any, path: str) -> str:
    ensure_parent_directory(path)
    with open(path, 'w') as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    return path


def read_json(path: str) -> Any:
    with open(path, 'r') as f:
        return json.load(f)


def write_transform(t: RigidTransform, path: str) -> str:
    return write_json(t.to_dict(), path)


def read_transform(path: str) -> RigidTransform:
    """Load a transform JSON file with 'rotation' (3x3 rows) and 'translation' keys."""
    data: Dict = read_json(path)
    if "rotation" not in data or "translation" not in data:
        raise ValueError(f"{path}: transform JSON needs 'rotation' and 'translation'")
    return RigidTransform.from_dict(data)


def write_feature_file(vectors: np.ndarray, path: str) -> str:
    """Header 'D <dim> N <count>', then one whitespace-separated row per point."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    count, dim = vectors.shape
    ensure_parent_directory(path)
    # 17 significant digits make the text round trip bit-exact for float64
    np.savetxt(path, vectors, fmt="%.17g", delimiter=" ", header=f"D {dim} N {count}", comments="")
    return path


def read_feature_file(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise FeatureFileError(f"{path}: feature file not found")

    with open(path, 'r') as f:
        header = f.readline().split()
    if len(header) != 4 or header[0] != "D" or header[2] != "N":
        raise FeatureFileError(f"{path}:1: expected header 'D <dim> N <count>'")
    try:
        dim, count = int(header[1]), int(header[3])
    except ValueError:
        raise FeatureFileError(f"{path}:1: header dimensions must be integers")

    try:
        vectors = np.loadtxt(path, skiprows=1, ndmin=2, dtype=float)
    except ValueError as e:
        raise FeatureFileError(f"{path}: {e}") from e

    if vectors.shape != (count, dim):
        raise FeatureFileError(f"{path}: header promises {count}x{dim} values, found {vectors.shape[0]}x{vectors.shape[1] if vectors.ndim == 2 else 0}")
    return vectors
