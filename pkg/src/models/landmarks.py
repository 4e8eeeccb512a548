from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


@dataclass
class LandmarkSet:
    """N (x, y) points in input-image pixels with per-point visibility"""
    points: np.ndarray                       # (N, 2) float64, columns x, y
    visibility: Optional[np.ndarray] = None  # (N,) bool; None means all visible

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.visibility is None:
            self.visibility = np.ones(len(self.points), dtype=bool)
        else:
            self.visibility = np.asarray(self.visibility, dtype=bool).reshape(-1)

    @property
    def n(self) -> int:
        return len(self.points)

    def copy(self) -> 'LandmarkSet':
        return LandmarkSet(self.points.copy(), self.visibility.copy())

    def bbox(self, visible_only: bool = True):
        """(x_min, y_min, x_max, y_max) of the (visible) points"""
        pts = self.points[self.visibility] if visible_only and self.visibility.any() else self.points
        x_min, y_min = pts.min(axis=0)
        x_max, y_max = pts.max(axis=0)
        return float(x_min), float(y_min), float(x_max), float(y_max)

    def to_dict(self) -> Dict:
        return {
            'points': self.points.tolist(),
            'visibility': self.visibility.tolist()
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'LandmarkSet':
        return cls(np.array(data['points'], dtype=np.float64), data.get('visibility'))

    def validate(self) -> List[str]:
        errors = []
        if not np.all(np.isfinite(self.points)):
            errors.append("Landmark coordinates must be finite")
        if self.visibility.shape != (self.n,):
            errors.append(f"visibility has {self.visibility.size} entries for {self.n} points")
        return errors


@dataclass
class HeatmapStack:
    """(N, H, W) per-landmark maps, values in [0, 1]"""
    maps: np.ndarray

    @property
    def n(self) -> int:
        return self.maps.shape[0]

    @property
    def resolution(self) -> int:
        return self.maps.shape[-1]


@dataclass
class Sample:
    """A cropped (3, 128, 128) image in [0, 1] with its landmarks"""
    image: np.ndarray
    landmarks: LandmarkSet
    id: str = ""
    metadata: Dict = field(default_factory=dict)

    def validate(self) -> List[str]:
        errors = self.landmarks.validate()
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            errors.append(f"image must be (3, H, W), got {self.image.shape}")
        pts = self.landmarks.points
        if pts.size and (pts.min() < -32 or pts.max() >= 160):
            errors.append(f"sample {self.id}: landmarks outside [-32, 160)")
        return errors
