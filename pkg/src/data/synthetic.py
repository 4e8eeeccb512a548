"""Procedural face-like images with analytically placed landmarks.

Each sample draws a FaceGeometry from its own generator seeded with
(seed, index), renders it with PIL and reads the landmarks off the same
geometry, so ground truth is exact by construction.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from PIL import Image, ImageDraw

from ..core.errors import ConfigurationError
from ..models.landmarks import LandmarkSet, Sample
from ..models.training import SynthConfig
from ..utils.logger import get_logger
from .dataset import LandmarkDataset

logger = get_logger(__name__)


@dataclass
class FaceGeometry:
    """Face parts in a square frame; x grows right, y grows down"""
    cx: float
    cy: float
    rx: float               # head half-width
    ry: float               # head half-height
    eye_dx: float           # eye centre offset from cx
    eye_y: float
    eye_a: float            # eye half-width
    eye_b: float            # eye half-height
    nose_y: float           # nose tip
    mouth_y: float
    mouth_w: float          # half-width
    mouth_up: float
    mouth_down: float
    skin: Tuple[int, int, int]
    background: Tuple[int, int, int]

    def eye(self, side: int) -> Tuple[float, float]:
        """Centre of the image-left (side=-1) or image-right (side=+1) eye"""
        return self.cx + side * self.eye_dx, self.eye_y

    def landmarks(self, n: int) -> np.ndarray:
        if n == 5:
            return np.array([
                self.eye(-1), self.eye(1), (self.cx, self.nose_y),
                (self.cx - self.mouth_w, self.mouth_y), (self.cx + self.mouth_w, self.mouth_y),
            ])
        if n == 68:
            return self._landmarks_68()
        raise ConfigurationError([f"no synthetic layout for {n} landmarks"])

    def _landmarks_68(self) -> np.ndarray:
        pts: List[Tuple[float, float]] = []
        # jaw, image-left to image-right through the chin
        for i in range(17):
            theta = np.pi - 0.3 - i * (np.pi - 0.6) / 16
            pts.append((self.cx + self.rx * np.cos(theta), self.cy + self.ry * np.sin(theta)))
        # brows: outer-left to inner-left, then inner-right to outer-right
        brow_y = self.eye_y - 2.2 * self.eye_b - 0.05 * self.ry
        for side, order in ((-1, range(5)), (1, range(4, -1, -1))):
            for k in order:
                offset = 0.15 * self.rx + (4 - k) * 0.11 * self.rx
                arch = 0.04 * self.ry * np.sin(np.pi * k / 4)
                pts.append((self.cx + side * offset, brow_y - arch))
        # nose bridge, then nostrils left to right
        top = self.eye_y
        for k in range(4):
            pts.append((self.cx, top + k * (self.nose_y - top) / 3))
        for k in range(5):
            pts.append((self.cx + (k - 2) * 0.06 * self.rx, self.nose_y + 0.06 * self.ry))
        # eyes: outer/inner corner, upper lid, lower lid
        for side in (-1, 1):
            ex, ey = self.eye(side)
            for theta in (np.pi, 2 * np.pi / 3, np.pi / 3, 0.0, -np.pi / 3, -2 * np.pi / 3):
                pts.append((ex + self.eye_a * np.cos(theta), ey - self.eye_b * np.sin(theta)))
        # outer lips: left corner, upper lip, right corner, lower lip back to the left
        pts.extend(self._lip(self.mouth_w, self.mouth_up, self.mouth_down, 12))
        pts.extend(self._lip(0.7 * self.mouth_w, 0.4 * self.mouth_up, 0.4 * self.mouth_down, 8))
        return np.array(pts)

    def _lip(self, half_width: float, up: float, down: float, count: int):
        for k in range(count):
            phi = 2 * np.pi * k / count
            sin = np.sin(phi)
            height = up if sin > 0 else down
            yield self.cx - half_width * np.cos(phi), self.mouth_y - height * sin


def _draw_geometry(cfg: SynthConfig, rng: np.random.Generator) -> FaceGeometry:
    size = cfg.image_size
    j = cfg.shape_jitter

    def jitter(value: float) -> float:
        return value * (1.0 + j * rng.uniform(-1.0, 1.0))

    centre = (size - 1) / 2.0
    rx = jitter(0.30 * size)
    ry = jitter(0.38 * size)
    cx = centre + j * rng.uniform(-1.0, 1.0) * 0.1 * size
    cy = centre + j * rng.uniform(-1.0, 1.0) * 0.1 * size
    skin = tuple(int(v) for v in rng.integers(150, 240, size=3))
    background = tuple(int(v) for v in rng.integers(0, 90, size=3))
    return FaceGeometry(
        cx=cx, cy=cy, rx=rx, ry=ry,
        eye_dx=jitter(0.40 * rx), eye_y=cy - jitter(0.25 * ry),
        eye_a=jitter(0.14 * rx), eye_b=jitter(0.07 * ry),
        nose_y=cy + jitter(0.12 * ry),
        mouth_y=cy + jitter(0.45 * ry), mouth_w=jitter(0.35 * rx),
        mouth_up=jitter(0.06 * ry), mouth_down=jitter(0.09 * ry),
        skin=skin, background=background,
    )


def _render(geometry: FaceGeometry, cfg: SynthConfig, rng: np.random.Generator):
    size = cfg.image_size
    g = geometry
    image = Image.new('RGB', (size, size), g.background)
    draw = ImageDraw.Draw(image)
    draw.ellipse([g.cx - g.rx, g.cy - g.ry, g.cx + g.rx, g.cy + g.ry], fill=g.skin)
    if cfg.n_landmarks == 68:
        pts = g.landmarks(68)
        draw.line([tuple(p) for p in pts[17:22]], fill=(60, 40, 30), width=2)
        draw.line([tuple(p) for p in pts[22:27]], fill=(60, 40, 30), width=2)
    for side in (-1, 1):
        ex, ey = g.eye(side)
        draw.ellipse([ex - g.eye_a, ey - g.eye_b, ex + g.eye_a, ey + g.eye_b], fill=(245, 245, 245))
        pupil = 0.6 * g.eye_b
        draw.ellipse([ex - pupil, ey - pupil, ex + pupil, ey + pupil], fill=(20, 20, 40))
    nose_width = 0.08 * g.rx
    draw.polygon([(g.cx, g.eye_y), (g.cx - nose_width, g.nose_y), (g.cx + nose_width, g.nose_y)],
                 fill=tuple(max(c - 50, 0) for c in g.skin))
    draw.rectangle([g.cx - g.mouth_w, g.mouth_y - g.mouth_up, g.cx + g.mouth_w, g.mouth_y + g.mouth_down],
                   fill=(150, 30, 40))

    occluded = []
    if rng.random() < cfg.occluder_probability:
        w, h = rng.uniform(0.15, 0.4, size=2) * size
        x0, y0 = rng.uniform(0, size - w), rng.uniform(0, size - h)
        colour = tuple(int(v) for v in rng.integers(0, 256, size=3))
        draw.rectangle([x0, y0, x0 + w, y0 + h], fill=colour)
        occluded = [(x0, y0, x0 + w, y0 + h)]

    pixels = np.asarray(image, dtype=np.float32).transpose(2, 0, 1) / 255.0
    if cfg.texture_noise > 0:
        pixels = pixels + rng.normal(0.0, cfg.texture_noise, size=pixels.shape).astype(np.float32)
    return np.clip(pixels, 0.0, 1.0).astype(np.float32), occluded


def generate_one(cfg: SynthConfig, index: int) -> Sample:
    rng = np.random.default_rng([cfg.seed, index])
    geometry = _draw_geometry(cfg, rng)
    image, occluders = _render(geometry, cfg, rng)
    points = geometry.landmarks(cfg.n_landmarks)
    metadata = {}
    if occluders:
        x0, y0, x1, y1 = occluders[0]
        inside = (points[:, 0] >= x0) & (points[:, 0] <= x1) & (points[:, 1] >= y0) & (points[:, 1] <= y1)
        metadata['occluder'] = [x0, y0, x1, y1]
        metadata['occluded'] = np.flatnonzero(inside).tolist()
    return Sample(image=image, landmarks=LandmarkSet(points), id=f"synth_{cfg.seed}_{index:05d}",
                  metadata=metadata)


def generate(cfg: SynthConfig, n: int, start: int = 0) -> LandmarkDataset:
    """n samples with indices start .. start + n - 1"""
    ConfigurationError.raise_if(cfg.validate())
    samples = [generate_one(cfg, index) for index in range(start, start + n)]
    logger.debug(f"generated {n} synthetic samples (seed {cfg.seed}, {cfg.n_landmarks} landmarks)")
    return LandmarkDataset(samples)
