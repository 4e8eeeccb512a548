"""Model size, FLOP and latency accounting, the ablation table and the
whole-network gradient check."""
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core import functional as F
from ..core.gradcheck import GradCheckReport, grad_check
from ..core.layers import DeformableConv2d, Module
from ..core.tensor import Tensor
from ..models.network_spec import BlockKind, TopologyKind
from ..utils.logger import get_logger
from .stacked import StackedModel, build_model, toy_spec

logger = get_logger(__name__)

BYTES_PER_PARAM = 4


def count_params(model: Module) -> int:
    return model.param_count()


def estimate_size_mb(model: Module) -> float:
    """float32 storage of the learnable parameters, in MiB"""
    return count_params(model) * BYTES_PER_PARAM / 2 ** 20


def estimate_flops(model: Module, input_shape: Tuple[int, int, int, int]) -> int:
    """Two FLOPs per multiply-accumulate over the convolutions of one forward"""
    batch, _, height, width = input_shape
    return 2 * batch * model.macs(height, width)


def measure_latency(model: Module, input_shape: Tuple[int, int, int, int], repeats: int = 5,
                    warmup: int = 1, seed: int = 0) -> float:
    """Median wall time of an inference-mode forward, in milliseconds"""
    was_training = model.training
    model.eval()
    images = Tensor(np.random.default_rng(seed).uniform(0, 1, size=input_shape).astype(np.float32))
    timings = []
    try:
        for index in range(warmup + repeats):
            started = time.perf_counter()
            model(images)
            if index >= warmup:
                timings.append((time.perf_counter() - started) * 1000.0)
    finally:
        model.train(was_training)
    return float(np.median(timings))


def summarize(model: StackedModel, input_shape: Tuple[int, int, int, int]) -> Dict:
    return {
        'params': count_params(model),
        'size_mb': round(estimate_size_mb(model), 4),
        'flops': estimate_flops(model, input_shape),
    }


@dataclass
class AblationRow:
    label: str
    kind: TopologyKind
    block: BlockKind
    n_stacks: int = 2
    down_steps: int = 4
    with_deformable: bool = False


# Structural rows of the ablation study; accuracy columns need full-scale training
ABLATION_ROWS: List[AblationRow] = [
    AblationRow("Hourglass^1-ResNet", TopologyKind.HOURGLASS, BlockKind.RESNET, n_stacks=1),
    AblationRow("Hourglass^2-ResNet", TopologyKind.HOURGLASS, BlockKind.RESNET),
    AblationRow("Hourglass^2-InceptionResNet", TopologyKind.HOURGLASS, BlockKind.INCEPTION_RESNET),
    AblationRow("Hourglass^2-HPM", TopologyKind.HOURGLASS, BlockKind.HPM),
    AblationRow("Hourglass^2-CAB", TopologyKind.HOURGLASS, BlockKind.CAB),
    AblationRow("Hourglass^2-HPM (down x3)", TopologyKind.HOURGLASS, BlockKind.HPM, down_steps=3),
    AblationRow("Hourglass^2-CAB (down x3)", TopologyKind.HOURGLASS, BlockKind.CAB, down_steps=3),
    AblationRow("UNet^2-CAB", TopologyKind.UNET, BlockKind.CAB),
    AblationRow("DLA^2-CAB", TopologyKind.DLA, BlockKind.CAB),
    AblationRow("SAT1^2-CAB", TopologyKind.SAT1, BlockKind.CAB),
    AblationRow("SAT2^2-CAB (down x3)", TopologyKind.SAT2, BlockKind.CAB, down_steps=3),
    AblationRow("SAT3^2-CAB (down x3)", TopologyKind.SAT3, BlockKind.CAB, down_steps=3),
    AblationRow("SAT3^2-CAB (down x3) + deformable", TopologyKind.SAT3, BlockKind.CAB,
                down_steps=3, with_deformable=True),
]


def ablation_table(width: int = 64, n_landmarks: int = 68, input_resolution: int = 64,
                   latency_repeats: int = 0, rows: Optional[List[AblationRow]] = None) -> List[Dict]:
    """Params, size, FLOPs and (optionally) single-image latency per ablation row"""
    results = []
    for row in rows or ABLATION_ROWS:
        spec = toy_spec(row.kind, n_landmarks=n_landmarks, width=width, n_stacks=row.n_stacks,
                        down_steps=row.down_steps, with_deformable=row.with_deformable,
                        block=row.block, input_resolution=input_resolution)
        model = build_model(spec)
        input_shape = (1, 3, spec.image_size, spec.image_size)
        entry = {'label': row.label, **spec.topology.to_dict(), 'n_stacks': row.n_stacks,
                 'with_deformable': row.with_deformable, **summarize(model, input_shape)}
        entry.pop('edge_mask')
        if latency_repeats > 0:
            entry['latency_ms'] = round(measure_latency(model, input_shape, latency_repeats), 2)
        logger.info(f"{row.label}: {entry['params']:,} params, {entry['size_mb']:.3f} MB")
        results.append(entry)
    return results


def full_model_gradcheck(tolerance: float = 1e-3, seed: int = 0, image_size: int = 32,
                         batch: int = 2, width: int = 16, n_landmarks: int = 5) -> GradCheckReport:
    """Directional gradient check of a two-stack SAT3-CAB network in double precision.

    Runs at reduced resolution; the offset convs get small random weights so
    deformable sampling positions are fractional and their gradients are live.
    """
    spec = toy_spec(TopologyKind.SAT3, n_landmarks=n_landmarks, width=width, n_stacks=2,
                    down_steps=3, input_resolution=image_size // 2, seed=seed)
    model = build_model(spec).to_dtype(np.float64)
    rng = np.random.default_rng(seed)
    for module in model.modules():
        if isinstance(module, DeformableConv2d):
            module.offset_conv.weight.data = rng.normal(0.0, 0.05, module.offset_conv.weight.shape)
            module.offset_conv.bias.data = rng.uniform(0.1, 0.4, module.offset_conv.bias.shape)
    # inference-mode normalisation; batch statistics of the 2x2 level are ill-conditioned
    model.eval()
    images = Tensor(rng.uniform(-1.0, 1.0, size=(batch, 3, image_size, image_size)))
    tensors = {'images': images}
    tensors.update({name: p for name, p in model.named_parameters()})

    def forward():
        outputs = model(images)
        return F.concat_channels(outputs)

    report = grad_check(forward, tensors, tolerance=tolerance, h=1e-6, rng=rng, directional=True,
                        label=f"{spec.topology.kind.value}^2-cab width {width}")
    logger.info(f"full-model gradcheck: max rel error {report.max_rel_error:.2e} "
                f"over {len(report.entries)} tensors")
    return report
