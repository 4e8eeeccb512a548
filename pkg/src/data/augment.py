from typing import Optional, Tuple

import numpy as np

from ..models.landmarks import Sample
from ..models.training import AugmentConfig
from ..models.transform_spec import TransformSpec
from ..transform.flip_pairs import flip_pairs_for
from ..transform.transforms import apply_to_image, apply_to_landmarks


def sample_transform(rng: np.random.Generator, cfg: AugmentConfig, n_landmarks: int,
                     size: int = 128, flip_pairs: Optional[np.ndarray] = None) -> TransformSpec:
    """Random flip / rotation / scaling about the frame centre.

    Draws are consumed in a fixed order (rotation, scale, flip) whatever the
    configuration, so a seeded stream stays aligned across settings.
    """
    rotation = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
    scale = rng.uniform(cfg.min_scale, cfg.max_scale)
    flip = bool(rng.random() < cfg.flip_probability)
    if cfg.max_rotation == 0:
        rotation = 0.0
    if cfg.min_scale == cfg.max_scale:
        scale = cfg.min_scale
    pairs = None
    if flip:
        pairs = flip_pairs if flip_pairs is not None else flip_pairs_for(n_landmarks)
    return TransformSpec.from_params(rotation_deg=rotation, scale=scale, flip=flip,
                                     flip_pairs=pairs, size=size)


def transform_sample(sample: Sample, t: TransformSpec) -> Sample:
    return Sample(image=apply_to_image(t, sample.image).astype(np.float32),
                  landmarks=apply_to_landmarks(t, sample.landmarks),
                  id=sample.id, metadata=dict(sample.metadata))


def augment(sample: Sample, rng: np.random.Generator,
            cfg: Optional[AugmentConfig] = None) -> Tuple[Sample, TransformSpec]:
    """Transformed sample together with the transform that produced it"""
    cfg = cfg or AugmentConfig()
    t = sample_transform(rng, cfg, sample.landmarks.n, size=sample.image.shape[-1])
    return transform_sample(sample, t), t
