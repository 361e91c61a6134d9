import math
from typing import Dict, Sequence, Tuple

import numpy as np

from config.settings import settings


def loss_rot(r_gt: np.ndarray, r_pred: np.ndarray) -> float:
    """Frobenius norm of R_gt^T R_pred - I."""
    return float(np.linalg.norm(np.asarray(r_gt).T @ np.asarray(r_pred) - np.eye(3), ord="fro"))


def loss_trans(t_gt: np.ndarray, t_pred: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t_gt, dtype=float) - np.asarray(t_pred, dtype=float)))


def loss_transform(r_gt, t_gt, r_pred, t_pred) -> Tuple[float, float]:
    """(rotation loss, translation loss) of one estimate."""
    return loss_rot(r_gt, r_pred), loss_trans(t_gt, t_pred)


def combined_loss(coarse: Tuple[float, float], refined: Tuple[float, float], lam: float = None) -> float:
    """
    lam * (rot + trans)_coarse + (1 - lam) * (rot + trans)_refined.

    Rotation and translation terms carry equal weight inside each total.
    """
    lam = settings.LOSS_LAMBDA if lam is None else lam
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return lam * (coarse[0] + coarse[1]) + (1.0 - lam) * (refined[0] + refined[1])


def summarize(values: Sequence[float]) -> Dict[str, float]:
    """
    Mean, sample standard deviation (n - 1), median, min and max.

    A single value has standard deviation 0; no values give NaN everywhere.
    """
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        return {"mean": math.nan, "std": math.nan, "median": math.nan, "min": math.nan, "max": math.nan}
    return {
        "mean": float(np.mean(data)),
        "std": float(np.std(data, ddof=1)) if data.size > 1 else 0.0,
        "median": float(np.median(data)),
        "min": float(np.min(data)),
        "max": float(np.max(data)),
    }
