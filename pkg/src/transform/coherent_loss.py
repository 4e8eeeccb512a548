from dataclasses import dataclass
from typing import Dict, List, Sequence, Union

import numpy as np

from ..core import functional as F
from ..core.errors import ConfigurationError, DimensionError
from ..core.tensor import Tensor
from ..models.training import LossWeights, PgLoss
from ..models.transform_spec import TransformSpec
from .transforms import warp_heatmaps


@dataclass
class CoherentLoss:
    total: Tensor
    pp: Tensor    # prediction-prediction discrepancy
    pg1: Tensor   # original branch vs ground truth
    pg2: Tensor   # transformed branch vs transformed ground truth

    def values(self) -> Dict[str, float]:
        return {
            'loss': self.total.item(),
            'L_pp': self.pp.item(),
            'L_pg1': self.pg1.item(),
            'L_pg2': self.pg2.item()
        }


def _transforms_for(t: Union[TransformSpec, Sequence[TransformSpec]], batch: int) -> List[TransformSpec]:
    if isinstance(t, TransformSpec):
        return [t] * batch
    return list(t)


def coherent_loss(h_orig: Tensor, h_trans: Tensor, gt: np.ndarray,
                  t: Union[TransformSpec, Sequence[TransformSpec]], w: LossWeights,
                  from_logits: bool = True) -> CoherentLoss:
    """lambda * |h_trans - T(h_orig)|^2 + PG(h_orig, gt) + PG(h_trans, T(gt)).

    Inputs are (B, N, h, w); each term is summed over pixels and averaged
    over B * N. With from_logits the inputs are head logits: PG uses sigmoid
    cross-entropy on them (CE mode) and every squared error compares sigmoid
    maps. Without it the inputs are already maps and only MSE mode applies.
    """
    gt = np.asarray(gt)
    if h_orig.shape != h_trans.shape or h_orig.shape != gt.shape:
        raise DimensionError('shape', h_orig.shape, (h_trans.shape, gt.shape), op='coherent_loss')
    if not from_logits and w.pg_loss == PgLoss.CE:
        raise ConfigurationError(["cross-entropy supervision needs logits"])
    batch, n = h_orig.shape[:2]
    transforms = _transforms_for(t, batch)

    p_orig = F.sigmoid(h_orig) if from_logits else h_orig
    p_trans = F.sigmoid(h_trans) if from_logits else h_trans
    gt_trans = warp_heatmaps(transforms, Tensor(gt.astype(h_orig.dtype))).data

    # both branches receive the L_pp gradient
    pp = F.squared_error_sum(p_trans, warp_heatmaps(transforms, p_orig))
    if w.pg_loss == PgLoss.CE:
        pg1 = F.sigmoid_cross_entropy_sum(h_orig, gt)
        pg2 = F.sigmoid_cross_entropy_sum(h_trans, gt_trans)
    else:
        pg1 = F.squared_error_sum(p_orig, gt)
        pg2 = F.squared_error_sum(p_trans, gt_trans)

    norm = 1.0 / (batch * n)
    pp, pg1, pg2 = pp * norm, pg1 * norm, pg2 * norm
    total = pp * w.lam + pg1 + pg2
    return CoherentLoss(total=total, pp=pp, pg1=pg1, pg2=pg2)
