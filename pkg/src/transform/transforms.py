"""Applying a TransformSpec to images, landmarks and heatmaps.

Images and heatmaps are resampled by inverse mapping with bilinear
interpolation and zero fill; heatmaps use the transform re-expressed in the
heatmap frame and additionally permute channels under a flip.
"""
from typing import List, Sequence, Union

import numpy as np

from ..core import functional as F
from ..core.errors import DimensionError
from ..core.tensor import Tensor
from ..models.landmarks import HeatmapStack, LandmarkSet
from ..models.transform_spec import TransformSpec

ImageLike = Union[Tensor, np.ndarray]


def _as_batch(x: ImageLike):
    """Tensor (B, C, H, W) plus a function restoring the caller's type/rank"""
    if isinstance(x, Tensor):
        return x, lambda out: out
    array = np.asarray(x)
    squeeze = array.ndim == 3
    batch = Tensor(array[None] if squeeze else array)
    return batch, (lambda out: out.data[0] if squeeze else out.data)


def _source_grids(transforms: Sequence[TransformSpec], height: int, width: int):
    grids = [t.source_grid(height, width) for t in transforms]
    return np.stack([g[0] for g in grids]), np.stack([g[1] for g in grids])


def _check_frame(t: TransformSpec, height: int, width: int, what: str):
    if height != width or width != t.size:
        raise DimensionError('width', t.size, (height, width), op=f"transform {what}")


def warp_images(transforms: Sequence[TransformSpec], images: Tensor) -> Tensor:
    """Per-sample warp of a (B, C, H, W) batch; differentiable in the images"""
    height, width = images.shape[2:]
    if len(transforms) != images.shape[0]:
        raise DimensionError('batch', images.shape[0], len(transforms), op='warp_images')
    for t in transforms:
        t.require_invertible()
        _check_frame(t, height, width, 'image')
    py, px = _source_grids(transforms, height, width)
    return F.bilinear_warp(images, py, px)


def apply_to_image(t: TransformSpec, img: ImageLike) -> ImageLike:
    """Warp an image (C, H, W) or batch (B, C, H, W); the mirror precedes the affine"""
    batch, restore = _as_batch(img)
    return restore(warp_images([t] * batch.shape[0], batch))


def apply_to_landmarks(t: TransformSpec, lms: LandmarkSet) -> LandmarkSet:
    perm = t.channel_permutation(lms.n)
    points = t.forward_points(lms.points)
    return LandmarkSet(points[perm], lms.visibility[perm])


def warp_heatmaps(transforms: Sequence[TransformSpec], maps: Tensor) -> Tensor:
    """Per-sample heatmap transform of a (B, N, h, w) batch; differentiable"""
    batch, n, height, width = maps.shape
    if len(transforms) != batch:
        raise DimensionError('batch', batch, len(transforms), op='warp_heatmaps')
    specs: List[TransformSpec] = []
    for t in transforms:
        t.require_invertible()
        if height != width or t.size % width:
            raise DimensionError('width', t.size, (height, width), op="transform heatmap")
        specs.append(t.heatmap_spec(t.size // width))
    py, px = _source_grids(specs, height, width)
    warped = F.bilinear_warp(maps, py, px)
    if not any(t.flip for t in transforms):
        return warped
    perm = np.stack([t.channel_permutation(n) for t in transforms])
    return F.permute_channels(warped, perm)


def apply_to_heatmaps(t: TransformSpec, h: Union[HeatmapStack, Tensor, np.ndarray]):
    if isinstance(h, HeatmapStack):
        return HeatmapStack(apply_to_heatmaps(t, h.maps))
    batch, restore = _as_batch(h)
    return restore(warp_heatmaps([t] * batch.shape[0], batch))
