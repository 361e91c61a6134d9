import os

import numpy as np

def ensure_parent_directory(file_path: str) -> str:
    """Create the parent directory of a file path if needed."""
    parent = os.path.dirname(os.path.abspath(file_path))
    os.makedirs(parent, exist_ok=True)
    return file_path

def unit_rows(vectors: np.ndarray) -> np.ndarray:
    """
    Scale every row to unit L2 norm.

    Zero rows are left as zeros; callers decide how to handle them.
    """
    vectors = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)

def as_point(query) -> np.ndarray:
    """Validate a single 3-vector query."""
    point = np.asarray(query, dtype=float).reshape(-1)
    if point.shape != (3,):
        raise ValueError(f"query must be a 3-vector, got shape {point.shape}")
    return point
