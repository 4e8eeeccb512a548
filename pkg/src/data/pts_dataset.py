"""Ingestion of real images paired with same-stem .pts annotations."""
import os
from typing import List, Tuple

import numpy as np
from PIL import Image

from ..core.errors import PtsParseError
from ..landmarks.pts import read_pts
from ..models.landmarks import LandmarkSet, Sample
from ..utils.logger import get_logger
from .dataset import LandmarkDataset

logger = get_logger(__name__)

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp')
CROP_MARGIN = 0.25


def crop_box(lms: LandmarkSet, margin: float = CROP_MARGIN) -> Tuple[float, float, float]:
    """Square box (x0, y0, side) around the landmark bbox grown by `margin` per side"""
    x_min, y_min, x_max, y_max = lms.bbox()
    side = max(x_max - x_min, y_max - y_min) * (1.0 + 2.0 * margin)
    side = max(side, 1.0)
    cx, cy = (x_min + x_max) / 2.0, (y_min + y_max) / 2.0
    return cx - side / 2.0, cy - side / 2.0, side


def crop_sample(image: Image.Image, lms: LandmarkSet, size: int = 128,
                margin: float = CROP_MARGIN) -> Tuple[np.ndarray, LandmarkSet]:
    """Crop/scale to size x size; landmark p maps to (p - box origin) * size / side"""
    x0, y0, side = crop_box(lms, margin)
    k = size / side
    # PIL's affine data maps output pixel centres (x + 0.5) to input pixel centres;
    # the shift keeps pixel index i at landmark coordinate i on both sides
    shift = 0.5 - 0.5 / k
    cropped = image.convert('RGB').transform((size, size), Image.AFFINE,
                                             data=(1 / k, 0, x0 + shift, 0, 1 / k, y0 + shift),
                                             resample=Image.BILINEAR)
    pixels = np.asarray(cropped, dtype=np.float32).transpose(2, 0, 1) / 255.0
    points = (lms.points - np.array([x0, y0])) * k
    return pixels, LandmarkSet(points, lms.visibility.copy())


def _pairs(directory: str) -> Tuple[List[Tuple[str, str]], List[str]]:
    pairs, skipped = [], []
    for name in sorted(os.listdir(directory)):
        stem, ext = os.path.splitext(name)
        if ext.lower() not in IMAGE_EXTENSIONS:
            continue
        pts_path = os.path.join(directory, stem + '.pts')
        if not os.path.exists(pts_path):
            logger.warning(f"Skipping {name}: no matching {stem}.pts")
            skipped.append(name)
            continue
        pairs.append((os.path.join(directory, name), pts_path))
    return pairs, skipped


def load_pts_dataset(directory: str, size: int = 128, margin: float = CROP_MARGIN,
                     n_landmarks: int = None) -> LandmarkDataset:
    """Pair image files with same-stem .pts files and crop each face.

    Images without annotations, or with a landmark count different from
    n_landmarks, are skipped with a warning; malformed .pts files raise.
    """
    pairs, _ = _pairs(directory)
    samples = []
    for image_path, pts_path in pairs:
        lms = read_pts(pts_path)
        if n_landmarks is not None and lms.n != n_landmarks:
            logger.warning(f"Skipping {os.path.basename(pts_path)}: {lms.n} points, expected {n_landmarks}")
            continue
        if lms.n == 0:
            raise PtsParseError("no landmarks to crop around", 2, pts_path)
        with Image.open(image_path) as image:
            pixels, cropped = crop_sample(image, lms, size, margin)
        stem = os.path.splitext(os.path.basename(image_path))[0]
        samples.append(Sample(image=pixels, landmarks=cropped, id=stem,
                              metadata={'source': image_path, 'crop': list(crop_box(lms, margin))}))
    logger.info(f"loaded {len(samples)} annotated images from {directory}")
    return LandmarkDataset(samples)
