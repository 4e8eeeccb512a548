from typing import List, Optional

import numpy as np

from ..core import functional as F
from ..core.errors import ConfigurationError, DimensionError
from ..core.layers import Conv2d, ConvUnit, DeformableUnit, Module
from ..core.tensor import Tensor
from ..models.network_spec import BlockKind, BlockSpec, ModelSpec, TopologySpec
from ..utils.logger import get_logger
from .blocks import build_block
from .topology import ScaleDAG, build_topology

logger = get_logger(__name__)


class Stem(Module):
    """3x3 conv -> residual bottleneck -> 2x2 max pool (halves the resolution)"""

    def __init__(self, width: int, rng: np.random.Generator, in_channels: int = 3):
        self.conv = Conv2d(in_channels, width, 3, rng)
        self.residual = build_block(BlockSpec(BlockKind.RESNET, width, width), rng)

    def forward(self, images: Tensor) -> Tensor:
        return F.max_pool2d(self.residual(self.conv(images)))


class StackCell(Module):
    """One stacked sub-network: scale DAG, optional deformable layer, heatmap head"""

    def __init__(self, dag: ScaleDAG, n_landmarks: int, with_deformable: bool,
                 rng: np.random.Generator, remap: bool):
        width = dag.spec.base_width
        self.dag = dag
        self.deform = DeformableUnit(width, width, rng) if with_deformable else None
        self.head = ConvUnit(width, n_landmarks, 1, rng)
        # projects the logits back to feature width for the next stack
        self.remap = Conv2d(n_landmarks, width, 1, rng) if remap else None

    def forward(self, x: Tensor):
        features = self.dag(x)
        if self.deform is not None:
            features = self.deform(features)
        logits = self.head(features)
        next_input = None
        if self.remap is not None:
            next_input = F.add(features, self.remap(logits))
        return logits, next_input


class StackedModel(Module):
    """Stem followed by stacked sub-networks, each emitting heatmap logits"""

    def __init__(self, stem: Stem, stacks: List[StackCell], spec: Optional[ModelSpec] = None):
        self.stem = stem
        self.stacks = stacks
        self.spec = spec

    @property
    def n_landmarks(self) -> int:
        return self.stacks[0].head.conv.out_channels

    def forward(self, images: Tensor) -> List[Tensor]:
        """(B, 3, S, S) images -> one (B, N, S/2, S/2) logit tensor per stack"""
        if images.ndim != 4 or images.shape[1] != self.stem.conv.in_channels:
            raise DimensionError('channels', self.stem.conv.in_channels,
                                 images.shape[1] if images.ndim == 4 else images.shape, op='StackedModel')
        x = self.stem(images)
        outputs = []
        for cell in self.stacks:
            logits, x = cell(x)
            outputs.append(logits)
        return outputs

    def predict(self, images: Tensor) -> List[Tensor]:
        """Sigmoid heatmaps of every stack"""
        return [F.sigmoid(logits) for logits in self.forward(images)]

    def macs(self, height: int, width: int) -> int:
        total = self.stem.macs(height, width)
        for cell in self.stacks:
            total += cell.macs(height // 2, width // 2)
        return total


def stack(dags: List[ScaleDAG], n_stacks: int, with_deformable: bool, n_landmarks: int = 68,
          rng: Optional[np.random.Generator] = None, spec: Optional[ModelSpec] = None) -> StackedModel:
    """Chain n_stacks scale DAGs behind a shared stem with intermediate heads"""
    errors = []
    if n_stacks < 1:
        errors.append("n_stacks must be at least 1")
    if len(dags) != n_stacks:
        errors.append(f"need one scale graph per stack: got {len(dags)} for {n_stacks} stacks")
    widths = {dag.spec.base_width for dag in dags}
    if len(widths) > 1:
        errors.append(f"stacked graphs must share one width, got {sorted(widths)}")
    ConfigurationError.raise_if(errors)

    rng = rng if rng is not None else np.random.default_rng(0)
    stem = Stem(dags[0].spec.base_width, rng)
    cells = [StackCell(dag, n_landmarks, with_deformable, rng, remap=index < n_stacks - 1)
             for index, dag in enumerate(dags)]
    return StackedModel(stem, cells, spec)


def build_model(spec: ModelSpec) -> StackedModel:
    ConfigurationError.raise_if(spec.validate())
    rng = np.random.default_rng(spec.seed)
    dags = [build_topology(spec.topology, rng) for _ in range(spec.n_stacks)]
    model = stack(dags, spec.n_stacks, spec.with_deformable, spec.n_landmarks, rng, spec)
    logger.info(f"built {spec.topology.kind.value}^{spec.n_stacks}-{spec.topology.block.value} "
                f"(down x{spec.topology.down_steps}, width {spec.topology.base_width}): "
                f"{model.param_count():,} parameters")
    return model


def toy_spec(kind, n_landmarks: int = 5, width: int = 16, n_stacks: int = 2,
             down_steps: int = 3, with_deformable: bool = True, block=BlockKind.CAB,
             input_resolution: int = 64, seed: int = 0) -> ModelSpec:
    """Small model spec used by presets, tests and the gradient check"""
    topology = TopologySpec(kind=kind, down_steps=down_steps, base_width=width, block=block,
                            input_resolution=input_resolution)
    return ModelSpec(topology=topology, n_stacks=n_stacks, n_landmarks=n_landmarks,
                     with_deformable=with_deformable, seed=seed)
