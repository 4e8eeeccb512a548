"""Scale topologies as resolution-indexed DAGs of blocks.

Nodes are named x{level}_{column}: level l runs at input_resolution / 2**l
and column 0 is the encoder. Edges are lateral (same level), up (from the
level below, nearest x2 upsampling) or down (from the level above, 2x2 max
pooling). Multi-input nodes concatenate their resampled inputs, mix them to
the node width and then apply the node's block.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core import functional as F
from ..core.errors import ConfigurationError, DimensionError
from ..core.layers import Conv2d, Module, SeparableUnit
from ..core.tensor import Tensor
from ..models.network_spec import TopologyKind, TopologySpec
from ..utils.logger import get_logger
from .blocks import build_block

logger = get_logger(__name__)

INPUT = 'input'

LATERAL = 'lateral'
UP = 'up'
DOWN = 'down'
FEED = 'input'  # the DAG input into the first encoder node


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    kind: str

    @property
    def key(self) -> str:
        return f"{self.source}->{self.target}"


@dataclass
class DagNode:
    name: str
    level: int
    column: int
    role: str                   # encoder | lateral | decoder | aggregation | identity
    inputs: List[Edge] = field(default_factory=list)


def node_name(level: int, column: int) -> str:
    return f"x{level}_{column}"


class NodeCell(Module):
    """Computation of one DAG node: optional input mix, then optional block"""

    def __init__(self, mix: Optional[Module], block: Optional[Module]):
        self.mix = mix
        self.block = block

    def forward(self, inputs: List[Tensor]) -> Tensor:
        x = inputs[0] if len(inputs) == 1 else F.concat_channels(inputs)
        if self.mix is not None:
            x = self.mix(x)
        if self.block is not None:
            x = self.block(x)
        return x


class ScaleDAG(Module):
    """Runnable scale topology; input and output run at full resolution"""

    def __init__(self, spec: TopologySpec, nodes: List[DagNode], output: str,
                 rng: np.random.Generator):
        self.spec = spec
        self.graph: Dict[str, DagNode] = {n.name: n for n in nodes}
        self.output = output
        self.order = topological_order(self.graph)
        check_resolutions(self.graph)
        self.cells: Dict[str, NodeCell] = {}
        for name in self.order:
            self.cells[name] = self._make_cell(self.graph[name], rng)

    def _make_cell(self, node: DagNode, rng) -> NodeCell:
        width = self.spec.base_width
        fan_in = width * len(node.inputs)
        if node.role == 'identity':
            return NodeCell(None, None)
        if len(node.inputs) == 1:
            return NodeCell(None, build_block(self.spec.block_spec(), rng))
        if self.spec.kind == TopologyKind.SAT3:
            mix = SeparableUnit(fan_in, width, rng)
            # separable aggregation replaces the aggregation node's block
            block = build_block(self.spec.block_spec(), rng) if node.role == 'decoder' else None
            return NodeCell(mix, block)
        return NodeCell(Conv2d(fan_in, width, 1, rng), build_block(self.spec.block_spec(), rng))

    @property
    def nodes(self) -> List[DagNode]:
        return [self.graph[name] for name in self.order]

    @property
    def edges(self) -> List[Edge]:
        return [edge for node in self.nodes for edge in node.inputs]

    def aggregation_nodes(self) -> List[DagNode]:
        return [n for n in self.nodes if n.role == 'aggregation']

    def encoder_levels(self) -> List[int]:
        """Levels of the encoder nodes above the shared bottleneck"""
        return sorted(n.level for n in self.nodes if n.role == 'encoder' and n.level < self.spec.down_steps)

    def decoder_levels(self) -> List[int]:
        return sorted(n.level for n in self.nodes if n.role == 'decoder')

    def deepest_resolution(self) -> int:
        deepest = max(n.level for n in self.nodes)
        return self.spec.input_resolution // 2 ** deepest

    def forward(self, x: Tensor) -> Tensor:
        values = {INPUT: x}
        for name in self.order:
            inputs = [_resample(values[edge.source], edge.kind) for edge in self.graph[name].inputs]
            values[name] = self.cells[name](inputs)
        return values[self.output]

    def macs(self, height: int, width: int) -> int:
        total = 0
        for name in self.order:
            scale = 2 ** self.graph[name].level
            total += self.cells[name].macs(height // scale, width // scale)
        return total


def _resample(x: Tensor, kind: str) -> Tensor:
    if kind == UP:
        return F.upsample_nearest2x(x)
    if kind == DOWN:
        return F.max_pool2d(x)
    return x


def topological_order(graph: Dict[str, DagNode]) -> List[str]:
    """Kahn's algorithm; ties resolve in (column, level) order"""
    indegree = {name: 0 for name in graph}
    consumers: Dict[str, List[str]] = {name: [] for name in graph}
    for node in graph.values():
        for edge in node.inputs:
            if edge.source == INPUT:
                continue
            if edge.source not in graph:
                raise ConfigurationError([f"edge {edge.key} reads unknown node {edge.source}"])
            indegree[node.name] += 1
            consumers[edge.source].append(node.name)

    def sort_key(name):
        return graph[name].column, graph[name].level

    ready = deque(sorted((n for n, d in indegree.items() if d == 0), key=sort_key))
    order = []
    while ready:
        name = ready.popleft()
        order.append(name)
        for consumer in sorted(consumers[name], key=sort_key):
            indegree[consumer] -= 1
            if indegree[consumer] == 0:
                ready.append(consumer)
    if len(order) != len(graph):
        stuck = sorted(set(graph) - set(order))
        raise ConfigurationError([f"scale graph has a cycle through {', '.join(stuck)}"])
    return order


def check_resolutions(graph: Dict[str, DagNode]):
    """Every edge joins equal (lateral) or adjacent (up/down) levels"""
    expected = {FEED: 0, LATERAL: 0, UP: 1, DOWN: -1}
    for node in graph.values():
        for edge in node.inputs:
            source_level = 0 if edge.source == INPUT else graph[edge.source].level
            if source_level - node.level != expected[edge.kind]:
                raise DimensionError('level', node.level + expected[edge.kind], source_level,
                                     op=f"edge {edge.key} ({edge.kind})")


class _Wiring:
    def __init__(self):
        self.nodes: Dict[str, DagNode] = {}

    def node(self, level: int, column: int, role: str) -> str:
        name = node_name(level, column)
        self.nodes[name] = DagNode(name, level, column, role)
        return name

    def edge(self, source: str, target: str, kind: str):
        self.nodes[target].inputs.append(Edge(source, target, kind))

    def encoder(self, down_steps: int):
        for level in range(down_steps + 1):
            name = self.node(level, 0, 'encoder')
            if level == 0:
                self.edge(INPUT, name, FEED)
            else:
                self.edge(node_name(level - 1, 0), name, DOWN)


def _unet(spec: TopologySpec) -> Tuple[Dict[str, DagNode], str]:
    d = spec.down_steps
    w = _Wiring()
    w.encoder(d)
    below = node_name(d, 0)
    for level in range(d - 1, -1, -1):
        name = w.node(level, d - level, 'decoder')
        w.edge(node_name(level, 0), name, LATERAL)
        w.edge(below, name, UP)
        below = name
    return w.nodes, below


def _hourglass(spec: TopologySpec) -> Tuple[Dict[str, DagNode], str]:
    d = spec.down_steps
    w = _Wiring()
    w.encoder(d)
    for level in range(d):
        name = w.node(level, 1, 'lateral')
        w.edge(node_name(level, 0), name, LATERAL)
    below = node_name(d, 0)
    for level in range(d - 1, -1, -1):
        name = w.node(level, d - level + 1, 'decoder')
        w.edge(node_name(level, 1), name, LATERAL)
        w.edge(below, name, UP)
        below = name
    return w.nodes, below


def _down_edge_enabled(spec: TopologySpec, source: str, target: str, column: int) -> bool:
    key = f"{source}->{target}"
    if key in spec.edge_mask:
        return bool(spec.edge_mask[key])
    if spec.kind == TopologyKind.SAT3:
        return column == 1
    return spec.kind in (TopologyKind.SAT1, TopologyKind.SAT2)


def _aggregation_grid(spec: TopologySpec) -> Tuple[Dict[str, DagNode], str]:
    """Iterative, hierarchical aggregation: node (l, j) merges (l, j-1) and (l+1, j-1)"""
    d = spec.down_steps
    w = _Wiring()
    w.encoder(d)
    with_down = spec.kind in (TopologyKind.SAT1, TopologyKind.SAT2, TopologyKind.SAT3)
    for column in range(1, d + 1):
        for level in range(d - column, -1, -1):
            decoder = level == d - column
            if spec.kind == TopologyKind.SAT3 and level == 0 and not decoder:
                name = w.node(level, column, 'identity')
                w.edge(node_name(level, column - 1), name, LATERAL)
                continue
            name = w.node(level, column, 'decoder' if decoder else 'aggregation')
            w.edge(node_name(level, column - 1), name, LATERAL)
            w.edge(node_name(level + 1, column - 1), name, UP)
            if with_down and level >= 1:
                source = node_name(level - 1, column - 1)
                if _down_edge_enabled(spec, source, name, column):
                    w.edge(source, name, DOWN)
    return w.nodes, node_name(0, d)


_WIRINGS = {
    TopologyKind.UNET: _unet,
    TopologyKind.HOURGLASS: _hourglass,
    TopologyKind.DLA: _aggregation_grid,
    TopologyKind.SAT1: _aggregation_grid,
    TopologyKind.SAT2: _aggregation_grid,
    TopologyKind.SAT3: _aggregation_grid,
}


def _check_edge_mask(spec: TopologySpec, nodes: Dict[str, DagNode]):
    if not spec.edge_mask:
        return
    if spec.kind not in (TopologyKind.SAT1, TopologyKind.SAT2, TopologyKind.SAT3):
        raise ConfigurationError([f"{spec.kind.value} has no optional edges to mask"])
    errors = []
    for key in spec.edge_mask:
        source, _, target = key.partition('->')
        node = nodes.get(target)
        if node is None or node.role == 'identity' or node.level < 1 or node.column < 1:
            errors.append(f"edge mask {key!r} does not name a down-sampling aggregation edge")
        elif source != node_name(node.level - 1, node.column - 1):
            errors.append(f"edge mask {key!r} does not name a down-sampling aggregation edge")
    ConfigurationError.raise_if(errors)


def build_topology(spec: TopologySpec, rng: Optional[np.random.Generator] = None) -> ScaleDAG:
    ConfigurationError.raise_if(spec.validate())
    rng = rng if rng is not None else np.random.default_rng(0)
    nodes, output = _WIRINGS[spec.kind](spec)
    _check_edge_mask(spec, nodes)
    dag = ScaleDAG(spec, list(nodes.values()), output, rng)
    logger.debug(f"built {spec.kind.value} topology: {len(nodes)} nodes, {len(dag.edges)} edges")
    return dag


def export_dot(dag: ScaleDAG) -> str:
    """DOT rendering with columns left to right and levels top to bottom"""
    lines = [f'digraph "{dag.spec.kind.value}" {{', '  rankdir=LR;', '  node [shape=box];',
             f'  "{INPUT}" [shape=invhouse];']
    for level in sorted({n.level for n in dag.nodes}):
        members = " ".join(f'"{n.name}";' for n in dag.nodes if n.level == level)
        lines.append(f'  subgraph "level{level}" {{ rank=same; {members} }}')
    for node in dag.nodes:
        resolution = dag.spec.input_resolution // 2 ** node.level
        style = ' style=dashed' if node.role == 'identity' else ''
        lines.append(f'  "{node.name}" [label="{node.name}\\n{node.role} {resolution}x{resolution}"{style}];')
    for edge in dag.edges:
        lines.append(f'  "{edge.source}" -> "{edge.target}" [label="{edge.kind}"];')
    lines.append('}')
    return "\n".join(lines) + "\n"
