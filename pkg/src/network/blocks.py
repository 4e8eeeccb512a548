"""Resolution-preserving building blocks as small named op graphs.

Every block is a BlockGraph: an ordered list of nodes reading from the
'input' port and ending in the 'output' node, which always adds a skip path
(identity, or a 1x1 projection when the channel count changes).
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..core import functional as F
from ..core.errors import ConfigurationError
from ..core.layers import Conv2d, ConvUnit, DepthwiseUnit, Module, SeparableUnit
from ..core.tensor import Tensor
from ..models.network_spec import BlockKind, BlockSpec

INPUT = 'input'
OUTPUT = 'output'


@dataclass
class GraphNode:
    name: str
    op: str                      # unit | add | concat | replicate
    inputs: List[str]
    channels: int
    module: Optional[Module] = field(default=None, repr=False)
    factor: int = 1


class BlockGraph(Module):
    """Runnable block: ordered nodes with a single input and output port"""

    def __init__(self, spec: BlockSpec, nodes: List[GraphNode]):
        self.spec = spec
        self.nodes = nodes
        self.units: Dict[str, Module] = {n.name: n.module for n in nodes if n.module is not None}

    def forward(self, x: Tensor) -> Tensor:
        values = {INPUT: x}
        for node in self.nodes:
            args = [values[name] for name in node.inputs]
            if node.op == 'unit':
                values[node.name] = node.module(args[0])
            elif node.op == 'add':
                values[node.name] = F.add(args[0], args[1])
            elif node.op == 'concat':
                values[node.name] = F.concat_channels(args)
            elif node.op == 'replicate':
                values[node.name] = F.replicate_channels(args[0], node.factor)
            else:
                raise ConfigurationError([f"unknown block op {node.op!r}"])
        return values[OUTPUT]

    def to_dot(self, name: str = "block") -> str:
        lines = [f'digraph "{name}" {{', '  rankdir=TB;', f'  "{INPUT}" [shape=invhouse];']
        for node in self.nodes:
            label = f"{node.name}\\n{node.op} [{node.channels}]"
            if node.module is not None:
                label = f"{node.name}\\n{type(node.module).__name__} [{node.channels}]"
            lines.append(f'  "{node.name}" [label="{label}"];')
        for node in self.nodes:
            for source in node.inputs:
                lines.append(f'  "{source}" -> "{node.name}";')
        lines.append('}')
        return "\n".join(lines) + "\n"


class _Builder:
    def __init__(self, channels_in: int):
        self.nodes: List[GraphNode] = []
        self.channels = {INPUT: channels_in}

    def _push(self, node: GraphNode) -> str:
        if node.name in self.channels:
            raise ConfigurationError([f"duplicate block node {node.name!r}"])
        self.nodes.append(node)
        self.channels[node.name] = node.channels
        return node.name

    def unit(self, name: str, module: Module, source: str, channels: int) -> str:
        return self._push(GraphNode(name, 'unit', [source], channels, module=module))

    def add(self, name: str, a: str, b: str) -> str:
        if self.channels[a] != self.channels[b]:
            raise ConfigurationError([f"add {name}: {a} has {self.channels[a]} channels, "
                                      f"{b} has {self.channels[b]}"])
        return self._push(GraphNode(name, 'add', [a, b], self.channels[a]))

    def concat(self, name: str, sources: List[str]) -> str:
        return self._push(GraphNode(name, 'concat', list(sources),
                                    sum(self.channels[s] for s in sources)))

    def replicate(self, name: str, source: str, factor: int) -> str:
        return self._push(GraphNode(name, 'replicate', [source], self.channels[source] * factor,
                                    factor=factor))

    def residual(self, branch: str, rng: np.random.Generator, channels_out: int):
        skip = INPUT
        if self.channels[INPUT] != channels_out:
            skip = self.unit('skip', Conv2d(self.channels[INPUT], channels_out, 1, rng),
                             INPUT, channels_out)
        self.add(OUTPUT, branch, skip)


def _resnet(spec: BlockSpec, rng) -> _Builder:
    cin, cout = spec.channels_in, spec.channels_out
    mid = cout // spec.ratio
    b = _Builder(cin)
    h = b.unit('reduce', ConvUnit(cin, mid, 1, rng), INPUT, mid)
    h = b.unit('conv', ConvUnit(mid, mid, 3, rng), h, mid)
    h = b.unit('expand', ConvUnit(mid, cout, 1, rng), h, cout)
    b.residual(h, rng, cout)
    return b


def _inception_resnet(spec: BlockSpec, rng) -> _Builder:
    cin, cout = spec.channels_in, spec.channels_out
    tower = cout // spec.ratio
    b = _Builder(cin)
    t1 = b.unit('tower1_1x1', ConvUnit(cin, tower, 1, rng), INPUT, tower)
    t2 = b.unit('tower2_1x1', ConvUnit(cin, tower, 1, rng), INPUT, tower)
    t2 = b.unit('tower2_3x3', ConvUnit(tower, tower, 3, rng), t2, tower)
    t3 = b.unit('tower3_1x1', ConvUnit(cin, tower, 1, rng), INPUT, tower)
    t3 = b.unit('tower3_3x3a', ConvUnit(tower, tower, 3, rng), t3, tower)
    t3 = b.unit('tower3_3x3b', ConvUnit(tower, tower, 3, rng), t3, tower)
    merged = b.concat('towers', [t1, t2, t3])
    h = b.unit('mix', ConvUnit(3 * tower, cout, 1, rng), merged, cout)
    b.residual(h, rng, cout)
    return b


def _hpm(spec: BlockSpec, rng) -> _Builder:
    cin, cout = spec.channels_in, spec.channels_out
    half, quarter = cout // 2, cout // 4
    b = _Builder(cin)
    a = b.unit('scale1', ConvUnit(cin, half, 3, rng), INPUT, half)
    c = b.unit('scale2', ConvUnit(half, quarter, 3, rng), a, quarter)
    d = b.unit('scale3', ConvUnit(quarter, quarter, 3, rng), c, quarter)
    h = b.concat('scales', [a, c, d])
    b.residual(h, rng, cout)
    return b


def _cab_level(b: _Builder, source: str, width: int, level: int, levels: int, rng) -> str:
    """Backbone from `source` at `width`; returns the node merged back at that width.

    The signal branches off before each channel decrease and rejoins right
    before the matching channel increase.
    """
    if level == levels:
        return b.unit(f'bottom{level}', SeparableUnit(width, width, rng), source, width)
    narrow = width // 2
    down = b.unit(f'down{level}', SeparableUnit(width, narrow, rng), source, narrow)
    inner = _cab_level(b, down, narrow, level + 1, levels, rng)
    merged = b.add(f"merge{level + 1}", inner, down)
    wide = b.replicate(f'replicate{level}', merged, 2)
    return b.unit(f'up{level}', DepthwiseUnit(width, rng), wide, width)


def _cab(spec: BlockSpec, rng) -> _Builder:
    width = spec.channels_in
    b = _Builder(width)
    h = _cab_level(b, INPUT, width, 0, spec.cab_levels, rng)
    b.add(OUTPUT, h, INPUT)
    return b


_BUILDERS = {
    BlockKind.RESNET: _resnet,
    BlockKind.INCEPTION_RESNET: _inception_resnet,
    BlockKind.HPM: _hpm,
    BlockKind.CAB: _cab,
}


def build_block(spec: BlockSpec, rng: Optional[np.random.Generator] = None) -> BlockGraph:
    ConfigurationError.raise_if(spec.validate())
    rng = rng if rng is not None else np.random.default_rng(0)
    builder = _BUILDERS[spec.kind](spec, rng)
    return BlockGraph(spec, builder.nodes)


# Closed-form parameter counts of the pre-activation units (BN gamma/beta included)
def _unit(cin: int, cout: int, k: int) -> int:
    return 2 * cin + cout * cin * k * k + cout


def _separable(cin: int, cout: int) -> int:
    return 2 * cin + (cin * 9 + cin) + (cout * cin + cout)


def _depthwise(c: int) -> int:
    return 2 * c + c * 9 + c


def _projection(cin: int, cout: int) -> int:
    return 0 if cin == cout else cin * cout + cout


def _cab_count(width: int, levels: int) -> int:
    if levels == 0:
        return _separable(width, width)
    return _separable(width, width // 2) + _cab_count(width // 2, levels - 1) + _depthwise(width)


def block_param_count(spec: BlockSpec) -> int:
    """Exact learnable-scalar count of build_block(spec), without building it"""
    ConfigurationError.raise_if(spec.validate())
    cin, cout = spec.channels_in, spec.channels_out
    if spec.kind == BlockKind.RESNET:
        mid = cout // spec.ratio
        return _unit(cin, mid, 1) + _unit(mid, mid, 3) + _unit(mid, cout, 1) + _projection(cin, cout)
    if spec.kind == BlockKind.INCEPTION_RESNET:
        t = cout // spec.ratio
        return 3 * _unit(cin, t, 1) + 3 * _unit(t, t, 3) + _unit(3 * t, cout, 1) + _projection(cin, cout)
    if spec.kind == BlockKind.HPM:
        half, quarter = cout // 2, cout // 4
        return (_unit(cin, half, 3) + _unit(half, quarter, 3) + _unit(quarter, quarter, 3)
                + _projection(cin, cout))
    return _cab_count(cin, spec.cab_levels)


def dense_chain_param_count(channels: int, depth: int) -> int:
    """Count of `depth` stacked 3x3 pre-activation units at constant width"""
    return depth * _unit(channels, channels, 3)


def channel_profile(spec: BlockSpec) -> List[int]:
    """Backbone channel widths along the main path, input to output"""
    if spec.kind == BlockKind.CAB:
        down = [spec.channels_in // 2 ** level for level in range(spec.cab_levels + 1)]
        return down + down[-2::-1]
    if spec.kind == BlockKind.RESNET:
        mid = spec.channels_out // spec.ratio
        return [spec.channels_in, mid, mid, spec.channels_out]
    if spec.kind == BlockKind.INCEPTION_RESNET:
        t = spec.channels_out // spec.ratio
        return [spec.channels_in, t, t, t, 3 * t, spec.channels_out]
    return [spec.channels_in, spec.channels_out // 2, spec.channels_out // 4,
            spec.channels_out // 4, spec.channels_out]
