import math
from typing import List

from ..models.training import TrainConfig


def drop_steps(cfg: TrainConfig) -> List[int]:
    """Steps at which the learning rate is multiplied by lr_drop"""
    return [math.floor(cfg.total_steps * fraction) for fraction in cfg.DROP_FRACTIONS]


def lr_at(step: int, cfg: TrainConfig) -> float:
    drops = sum(1 for boundary in drop_steps(cfg) if step >= boundary)
    return cfg.lr0 * cfg.lr_drop ** drops
