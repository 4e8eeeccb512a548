"""Coherence probe: how far predictions on a transformed image drift from the
transformed prediction on the original image."""
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ..core.errors import DimensionError
from ..data.augment import sample_transform
from ..data.dataset import LandmarkDataset
from ..landmarks.heatmap_codec import decode_batch
from ..models.training import AugmentConfig
from ..models.transform_spec import TransformSpec
from ..transform.transforms import apply_to_image, apply_to_heatmaps
from ..utils.logger import get_logger
from .predictor import Predictor

logger = get_logger(__name__)


@dataclass
class ProbeReport:
    map_discrepancy: float                 # sum_pixels |H(T.I) - T.H(I)|^2, averaged over landmarks
    landmark_discrepancy: float            # mean point distance, input pixels
    count: int
    per_transform: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'map_discrepancy': self.map_discrepancy,
            'landmark_discrepancy': self.landmark_discrepancy,
            'count': self.count,
            'per_transform': self.per_transform
        }


def coherence_probe(predictor: Predictor, dataset: LandmarkDataset,
                    transforms: Sequence[TransformSpec]) -> ProbeReport:
    """Mean discrepancy over every (sample, transform) pair.

    Landmarks compare decode(H(T.I)) with decode(T.H(I)), so the transform
    is applied in heatmap space on both sides of the comparison.
    """
    images = dataset.images()
    maps = predictor(images)
    if maps.shape[0] != len(dataset):
        raise DimensionError('batch', len(dataset), maps.shape[0], op='coherence_probe')
    per_transform = []
    map_total, point_total = 0.0, 0.0
    for index, t in enumerate(transforms):
        warped_maps = apply_to_heatmaps(t, maps)
        twin_maps = predictor(apply_to_image(t, images))
        n = maps.shape[1]
        diff = twin_maps.astype(np.float64) - warped_maps.astype(np.float64)
        map_error = np.sum(diff * diff, axis=(1, 2, 3)) / n
        points_twin = decode_batch(twin_maps)
        points_warped = decode_batch(warped_maps)
        point_error = np.array([np.mean(np.hypot(*(a.points - b.points).T))
                                for a, b in zip(points_twin, points_warped)])
        map_total += float(np.sum(map_error))
        point_total += float(np.sum(point_error))
        per_transform.append({'index': index, 'flip': t.flip,
                              'map_discrepancy': float(np.mean(map_error)),
                              'landmark_discrepancy': float(np.mean(point_error))})
    count = len(dataset) * len(transforms)
    report = ProbeReport(map_discrepancy=map_total / count if count else 0.0,
                         landmark_discrepancy=point_total / count if count else 0.0,
                         count=count, per_transform=per_transform)
    logger.info(f"coherence over {count} pairs: map {report.map_discrepancy:.5f}, "
                f"landmarks {report.landmark_discrepancy:.3f} px")
    return report


def probe_transforms(n_landmarks: int, count: int = 8, size: int = 128, seed: int = 0,
                     max_rotation: float = 30.0) -> List[TransformSpec]:
    """Reproducible mix of flips, rotations and scalings for probing"""
    rng = np.random.default_rng(seed)
    cfg = AugmentConfig(max_rotation=max_rotation, min_scale=0.9, max_scale=1.1, flip_probability=0.5)
    return [sample_transform(rng, cfg, n_landmarks, size=size) for _ in range(count)]
