from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NonFiniteError


class Tensor:
    """Array value with an optional gradient buffer and a reverse-mode tape.

    Feature maps are rank-4 NCHW arrays; parameters may have any rank.
    The tape is recorded only when at least one input requires a gradient.
    """

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float32)
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op = ""

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> 'Tensor':
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def accumulate_grad(self, grad: np.ndarray):
        if grad.shape != self.data.shape:
            grad = grad.reshape(self.data.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def zero_grad(self):
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None):
        """Propagate gradients to every tensor reachable on the tape"""
        if grad is None:
            grad = np.ones_like(self.data)
        self.accumulate_grad(np.asarray(grad, dtype=self.data.dtype))

        for node in reversed(_topological_order(self)):
            if node._backward is None or node.grad is None:
                continue
            node._backward(node.grad)
            for parent in node._parents:
                if parent.grad is not None and not np.all(np.isfinite(parent.grad)):
                    raise NonFiniteError(node._op, phase="backward")
            # intermediate buffers are not needed once propagated
            node.grad = None
            node._backward = None
            node._parents = ()

    # Operator sugar for scalar loss arithmetic
    def __add__(self, other):
        from . import functional as F
        if not isinstance(other, Tensor):
            return F.add_scalar(self, float(other))
        return F.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import functional as F
        return F.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import functional as F
        return F.scale(self, -1.0)

    def __sub__(self, other):
        return self + (-other)

    def sum(self) -> 'Tensor':
        from . import functional as F
        return F.sum_all(self)


class Parameter(Tensor):
    """Learnable tensor; always requires a gradient"""

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True, name=name)


def make_result(data: np.ndarray, parents: Sequence[Tensor], op: str,
                backward: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op output, checking finiteness and recording the tape entry"""
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    requires_grad = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires_grad)
    out._op = op
    if requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in visited:
                stack.append((parent, False))
    return order
