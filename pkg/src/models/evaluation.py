from dataclasses import dataclass, field
from typing import Dict, List, Optional
from enum import Enum

import numpy as np


class NmeMode(Enum):
    EYE_CENTRE = "eye_centre"
    OUTER_EYE_CORNER = "outer_eye_corner"
    BBOX_DIAGONAL = "bbox_diagonal"
    BBOX_SIZE = "bbox_size"


@dataclass
class EyeLayout:
    """Landmark indices defining the eyes for one annotation layout"""
    left_eye: List[int]
    right_eye: List[int]
    left_outer_corner: int
    right_outer_corner: int


EYE_LAYOUTS: Dict[int, EyeLayout] = {
    68: EyeLayout(left_eye=list(range(36, 42)), right_eye=list(range(42, 48)),
                  left_outer_corner=36, right_outer_corner=45),
    # toy layout: the eye points are their own centres and corners
    5: EyeLayout(left_eye=[0], right_eye=[1], left_outer_corner=0, right_outer_corner=1),
}


@dataclass
class CedCurve:
    thresholds: np.ndarray
    fractions: np.ndarray
    auc: float
    failure_rate: float
    cutoff: float

    @property
    def success_rate(self) -> float:
        return 1.0 - self.failure_rate

    def to_dict(self) -> Dict:
        return {
            'thresholds': self.thresholds.tolist(),
            'fractions': self.fractions.tolist(),
            'auc': self.auc,
            'failure_rate': self.failure_rate,
            'success_rate': self.success_rate,
            'cutoff': self.cutoff
        }


@dataclass
class EvaluationReport:
    """Per-sample errors plus the aggregate metrics of one evaluation run"""
    mode: NmeMode
    errors: List[float] = field(default_factory=list)
    sample_ids: List[str] = field(default_factory=list)
    ced: Optional[CedCurve] = None
    skipped: List[str] = field(default_factory=list)

    @property
    def mean_nme(self) -> float:
        return float(np.mean(self.errors)) if self.errors else float('nan')

    def to_dict(self) -> Dict:
        return {
            'mode': self.mode.value,
            'count': len(self.errors),
            # JSON has no NaN; an all-skipped run reports null
            'mean_nme': self.mean_nme if self.errors else None,
            'per_sample': [{'id': sample_id, 'nme': error}
                           for sample_id, error in zip(self.sample_ids, self.errors)],
            'ced': self.ced.to_dict() if self.ced else None,
            'skipped': self.skipped
        }
