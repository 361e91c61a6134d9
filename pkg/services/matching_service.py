from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from PIL import Image
from scipy.special import softmax

from config.settings import settings
from geometry.errors import DegenerateMatchError
from geometry.utils import ensure_parent_directory
from services.feature_service import FeatureSet


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Dot products between subsampled source rows and target columns."""
    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class ConsensusMatrix:
    """Row-softmax times column-softmax of a scaled similarity matrix."""
    values: np.ndarray
    row_softmax: np.ndarray
    col_softmax: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    @property
    def uniform_level(self) -> float:
        rows, cols = self.values.shape
        return 1.0 / (rows * cols)


@dataclass(frozen=True, eq=False)
class MatchSet:
    """
    One-to-one correspondences sorted by non-increasing confidence.

    The confidences are raw consensus values and enter weighted SVD as-is.
    """
    source_indices: np.ndarray
    target_indices: np.ndarray
    confidences: np.ndarray

    def __len__(self) -> int:
        return self.confidences.shape[0]

    @property
    def k(self) -> int:
        return len(self)

    def pairs(self) -> List[tuple]:
        return [
            (int(i), int(j), float(w))
            for i, j, w in zip(self.source_indices, self.target_indices, self.confidences)
        ]

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "pairs": [{"source": i, "target": j, "confidence": w} for i, j, w in self.pairs()],
        }


def similarity_matrix(fx: FeatureSet, fy: FeatureSet) -> SimilarityMatrix:
    if fx.dim != fy.dim:
        raise ValueError(f"feature dimensions differ: {fx.dim} vs {fy.dim}")
    return SimilarityMatrix(fx.vectors @ fy.vectors.T)


def bilateral_consensus(s: SimilarityMatrix, temperature: float = None) -> ConsensusMatrix:
    """
    Keep only matches both sides agree on: C = rowsoftmax(S/t) * colsoftmax(S/t).

    scipy's softmax subtracts the maximum before exponentiating.
    """
    temperature = settings.MATCH_TEMPERATURE if temperature is None else temperature
    if not temperature > 0:
        raise ValueError(f"softmax temperature must be positive, got {temperature}")

    logits = s.values / temperature
    row = softmax(logits, axis=1)
    col = softmax(logits, axis=0)
    return ConsensusMatrix(row * col, row, col)


def softmax_pool_top_k(c: ConsensusMatrix, k: int = None) -> MatchSet:
    """
    Greedy one-to-one selection of the k strongest consensus entries.

    Repeatedly takes the largest remaining entry and retires its row and
    column. Ties go to the lower row, then the lower column.
    """
    k = settings.TOP_K if k is None else k
    rows, cols = c.shape
    if not 1 <= k <= min(rows, cols):
        raise DegenerateMatchError(f"cannot select {k} one-to-one pairs from a {rows}x{cols} consensus matrix")

    flat = c.values.ravel()
    # stable sort on the negated values keeps row-major order among ties
    order = np.argsort(-flat, kind="stable")

    row_used = np.zeros(rows, dtype=bool)
    col_used = np.zeros(cols, dtype=bool)
    source, target, confidence = [], [], []
    for flat_index in order:
        i, j = divmod(int(flat_index), cols)
        if row_used[i] or col_used[j]:
            continue
        row_used[i] = True
        col_used[j] = True
        source.append(i)
        target.append(j)
        confidence.append(flat[flat_index])
        if len(source) == k:
            break

    return MatchSet(
        np.array(source, dtype=np.int64),
        np.array(target, dtype=np.int64),
        np.array(confidence, dtype=float),
    )


def diagonal_mass(c: ConsensusMatrix, source_ids: np.ndarray, target_ids: np.ndarray) -> float:
    """Share of the total consensus mass lying on ground-truth pairs (equal ids)."""
    truth = np.asarray(source_ids)[:, None] == np.asarray(target_ids)[None, :]
    total = c.values.sum()
    return float(c.values[truth].sum() / total) if total > 0 else 0.0


def pair_accuracy(matches: MatchSet, source_ids: np.ndarray, target_ids: np.ndarray) -> float:
    """Fraction of selected pairs whose source and target share a correspondence id."""
    if len(matches) == 0:
        return 0.0
    correct = np.asarray(source_ids)[matches.source_indices] == np.asarray(target_ids)[matches.target_indices]
    return float(np.mean(correct))


def dump_confidence_csv(c: ConsensusMatrix, path: str) -> str:
    """Row-major CSV with 6 significant digits."""
    ensure_parent_directory(path)
    np.savetxt(path, c.values, fmt="%.6g", delimiter=",")
    return path


def dump_confidence_png(c: ConsensusMatrix, path: str, threshold: Optional[float] = None) -> str:
    """
    Grayscale heatmap, darker meaning more confident.

    Entries at or below the threshold are drawn white.
    """
    threshold = settings.CONFIDENCE_DISPLAY_THRESHOLD if threshold is None else threshold
    values = c.values
    peak = values.max()
    shade = np.where(values > threshold, values / peak if peak > 0 else 0.0, 0.0)
    pixels = (255 * (1.0 - shade)).astype(np.uint8)

    ensure_parent_directory(path)
    Image.fromarray(pixels).save(path)  # uint8 2-D arrays load as mode "L"
    return path
