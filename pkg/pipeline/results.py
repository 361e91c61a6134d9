from dataclasses import dataclass, field
from typing import Dict, List, Optional

from geometry.transforms import NormalizationRecord, PointCloud, RigidTransform
from services.matching_service import MatchSet


@dataclass(frozen=True, eq=False)
class PipelineState:
    """
    Normalized-frame intermediates the refinement stage needs.

    source_sub/target_sub are the clouds the matches index into; coarse is
    the coarse transform expressed between the normalized clouds.
    """
    source_sub: PointCloud
    target_sub: PointCloud
    source_record: NormalizationRecord
    target_record: NormalizationRecord
    coarse: RigidTransform


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    """
    Outcome of one registration run.

    coarse/refined are expressed at the inputs' original scale. A failed run
    carries success=False and an error message instead of transforms.
    """
    coarse: Optional[RigidTransform] = None
    refined: Optional[RigidTransform] = None
    matches: Optional[MatchSet] = None
    residual: float = 0.0
    refined_residual: Optional[float] = None
    timings: Dict[str, float] = field(default_factory=dict)
    success: bool = True
    error: Optional[str] = None
    low_confidence: bool = False
    max_confidence: Optional[float] = None
    iterations: Optional[int] = None
    cost_history: List[float] = field(default_factory=list)
    state: Optional[PipelineState] = None

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError(f"residual must be non-negative, got {self.residual}")

    @classmethod
    def failure(cls, message: str, timings: Optional[Dict[str, float]] = None) -> "RegistrationResult":
        return cls(success=False, error=message, timings=dict(timings or {}))

    @property
    def transform(self) -> Optional[RigidTransform]:
        """Refined transform when available, otherwise the coarse one."""
        return self.refined if self.refined is not None else self.coarse

    def to_dict(self) -> Dict:
        """JSON-ready summary; timings are left out so outputs stay reproducible."""
        final = self.transform
        data = {
            "success": self.success,
            "error": self.error,
            "rotation": final.rotation.tolist() if final is not None else None,
            "translation": final.translation.tolist() if final is not None else None,
            "coarse": self.coarse.to_dict() if self.coarse is not None else None,
            "refined": self.refined.to_dict() if self.refined is not None else None,
            "residual": self.residual,
            "refined_residual": self.refined_residual,
        }
        if self.matches is not None:
            data["k"] = self.matches.k
            data["confidences"] = [float(w) for w in self.matches.confidences]
            data["max_confidence"] = self.max_confidence
            data["low_confidence"] = self.low_confidence
        if self.iterations is not None:
            data["iterations"] = self.iterations
            data["cost_history"] = [float(c) for c in self.cost_history]
        return data

