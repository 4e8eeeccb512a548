"""Landmark <-> heatmap conversion.

Heatmap coordinates are input pixels divided by `factor` (u = p / 2 for the
128 -> 64 stem). Ground truth is an unnormalised Gaussian (peak 1) centred at
the exact sub-pixel location and truncated to a square window of +-3 sigma
around the nearest grid point, so the global max sits on the quantised
landmark.
"""
from typing import List, Sequence, Union

import numpy as np

from ..models.landmarks import HeatmapStack, LandmarkSet

SIGMA = 1.0
TRUNCATE = 3.0
VISIBILITY_THRESHOLD = 0.01
REFINE_SHIFT = 0.25
# exact half-pixel centres lean toward the rounded-up index so the peak is unique
HALF_PIXEL_LEAN = 1e-3


def quantise(values: np.ndarray) -> np.ndarray:
    """Nearest grid index with halves rounding up"""
    return np.floor(np.asarray(values) + 0.5).astype(np.int64)


def render_heatmaps(lms: LandmarkSet, resolution: int = 64, sigma: float = SIGMA,
                    factor: int = 2) -> HeatmapStack:
    maps = np.zeros((lms.n, resolution, resolution), dtype=np.float32)
    radius = int(np.ceil(TRUNCATE * sigma))
    centres = lms.points / factor
    with np.errstate(invalid='ignore'):
        centres = np.where(centres - np.floor(centres) == 0.5, centres + HALF_PIXEL_LEAN, centres)
    peaks = quantise(centres)
    for index in range(lms.n):
        if not lms.visibility[index] or not np.all(np.isfinite(centres[index])):
            continue
        cx, cy = centres[index]
        px, py = peaks[index]
        x0, x1 = max(px - radius, 0), min(px + radius + 1, resolution)
        y0, y1 = max(py - radius, 0), min(py + radius + 1, resolution)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1, dtype=np.float64)
        ys = np.arange(y0, y1, dtype=np.float64)
        gx = np.exp(-((xs - cx) ** 2) / (2 * sigma ** 2))
        gy = np.exp(-((ys - cy) ** 2) / (2 * sigma ** 2))
        maps[index, y0:y1, x0:x1] = np.outer(gy, gx)
    return HeatmapStack(maps)


def render_batch(landmark_sets: Sequence[LandmarkSet], resolution: int = 64,
                 sigma: float = SIGMA, factor: int = 2) -> np.ndarray:
    """(B, N, R, R) ground-truth maps"""
    return np.stack([render_heatmaps(lms, resolution, sigma, factor).maps for lms in landmark_sets])


def _refine(profile_prev: float, profile_next: float) -> float:
    if profile_next > profile_prev:
        return REFINE_SHIFT
    if profile_prev > profile_next:
        return -REFINE_SHIFT
    return 0.0


def decode_landmarks(h: Union[HeatmapStack, np.ndarray], factor: int = 2,
                     threshold: float = VISIBILITY_THRESHOLD) -> LandmarkSet:
    """Argmax per channel, nudged a quarter pixel toward the larger neighbour"""
    maps = h.maps if isinstance(h, HeatmapStack) else np.asarray(h)
    n, height, width = maps.shape
    points = np.zeros((n, 2), dtype=np.float64)
    visibility = np.zeros(n, dtype=bool)
    flat = maps.reshape(n, -1)
    for index in range(n):
        # np.argmax returns the first maximum in row-major order
        best = int(np.argmax(flat[index]))
        y, x = divmod(best, width)
        channel = maps[index]
        dx = dy = 0.0
        if 0 < x < width - 1:
            dx = _refine(channel[y, x - 1], channel[y, x + 1])
        if 0 < y < height - 1:
            dy = _refine(channel[y - 1, x], channel[y + 1, x])
        points[index] = ((x + dx) * factor, (y + dy) * factor)
        visibility[index] = flat[index, best] >= threshold
    return LandmarkSet(points, visibility)


def decode_batch(maps: np.ndarray, factor: int = 2,
                 threshold: float = VISIBILITY_THRESHOLD) -> List[LandmarkSet]:
    return [decode_landmarks(m, factor, threshold) for m in np.asarray(maps)]
