"""In-memory sample collection and its on-disk form (PNG + .pts + JSON manifest)."""
import json
import os
from datetime import datetime
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np
from PIL import Image

from ..core.errors import IntegrityError
from ..landmarks.pts import read_pts, write_pts
from ..models.landmarks import LandmarkSet, Sample
from ..utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"


class LandmarkDataset:
    """Read-only sequence of samples; safe to share between readers"""

    def __init__(self, samples: Sequence[Sample]):
        self._samples: Tuple[Sample, ...] = tuple(samples)

    def __len__(self) -> int:
        return len(self._samples)

    def __getitem__(self, index: int) -> Sample:
        return self._samples[index]

    def __iter__(self) -> Iterator[Sample]:
        return iter(self._samples)

    @property
    def n_landmarks(self) -> int:
        return self._samples[0].landmarks.n if self._samples else 0

    def split(self, n_first: int) -> Tuple['LandmarkDataset', 'LandmarkDataset']:
        return LandmarkDataset(self._samples[:n_first]), LandmarkDataset(self._samples[n_first:])

    def images(self, indices: Sequence[int] = None) -> np.ndarray:
        """(B, 3, H, W) float32 stack"""
        chosen = self._samples if indices is None else [self._samples[i] for i in indices]
        return np.stack([s.image for s in chosen]).astype(np.float32)

    def landmarks(self, indices: Sequence[int] = None) -> List[LandmarkSet]:
        chosen = self._samples if indices is None else [self._samples[i] for i in indices]
        return [s.landmarks for s in chosen]


def save_image(path: str, image: np.ndarray):
    """(3, H, W) in [0, 1] -> 8-bit RGB PNG"""
    pixels = np.clip(np.rint(image.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path, format='PNG')


def load_image(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert('RGB'), dtype=np.float32).transpose(2, 0, 1) / 255.0


def write_dataset(dataset: LandmarkDataset, out_dir: str, description: str = "") -> str:
    """Write PNG + .pts per sample and a manifest; returns the manifest path"""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for sample in dataset:
        image_name = f"{sample.id}.png"
        pts_name = f"{sample.id}.pts"
        save_image(os.path.join(out_dir, image_name), sample.image)
        write_pts(os.path.join(out_dir, pts_name), sample.landmarks)
        entries.append({
            'id': sample.id,
            'image': image_name,
            'pts': pts_name,
            'visibility': sample.landmarks.visibility.tolist(),
            'metadata': sample.metadata
        })
    manifest = {
        'created_at': datetime.now().isoformat(),
        'description': description,
        'n_landmarks': dataset.n_landmarks,
        'samples': entries
    }
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    logger.info(f"wrote {len(entries)} samples to {out_dir}")
    return path


def load_manifest(path: str) -> LandmarkDataset:
    """Read a dataset written by write_dataset (paths relative to the manifest)"""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            manifest: Dict = json.load(f)
    except json.JSONDecodeError as e:
        raise IntegrityError(f"manifest {path} is not valid JSON: {e}")
    root = os.path.dirname(os.path.abspath(path))
    samples = []
    for entry in manifest.get('samples', []):
        lms = read_pts(os.path.join(root, entry['pts']))
        if entry.get('visibility') is not None:
            lms = LandmarkSet(lms.points, entry['visibility'])
        samples.append(Sample(image=load_image(os.path.join(root, entry['image'])), landmarks=lms,
                              id=entry.get('id', os.path.splitext(entry['image'])[0]),
                              metadata=entry.get('metadata', {})))
    logger.info(f"loaded {len(samples)} samples from {path}")
    return LandmarkDataset(samples)
