"""Central finite-difference verification of analytic gradients."""
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import functional as F
from .functional import BatchNormState, ConvParams
from .tensor import Tensor
from ..utils.logger import get_logger

logger = get_logger(__name__)

# Relative error uses max(|analytic|, |numeric|, REL_FLOOR) as denominator so
# entries whose true gradient is ~0 are judged on absolute error.
REL_FLOOR = 1e-3


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    checked: int


@dataclass
class GradCheckReport:
    label: str
    tolerance: float
    entries: List[GradCheckEntry] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> Dict:
        return {
            'label': self.label,
            'tolerance': self.tolerance,
            'max_rel_error': self.max_rel_error,
            'passed': self.passed,
            'seconds': round(self.seconds, 3),
            'entries': [{'name': e.name, 'max_rel_error': e.max_rel_error, 'checked': e.checked}
                        for e in self.entries],
        }


def _relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def grad_check(fn: Callable[[], Tensor], tensors: Dict[str, Tensor], tolerance: float = 1e-4,
               h: float = 1e-5, rng: Optional[np.random.Generator] = None,
               max_elements: Optional[int] = None, directional: bool = False,
               label: str = "graph") -> GradCheckReport:
    """Compare reverse-mode gradients of sum(fn() * R) with central differences.

    R is a fixed random probe, so the check covers a vector-Jacobian product of
    the whole output. In elementwise mode up to max_elements entries of every
    tensor are perturbed one at a time; in directional mode each tensor is
    perturbed once along a random unit direction (Jacobian-vector product).
    """
    rng = rng or np.random.default_rng(0)
    started = time.perf_counter()
    probe_shape = fn().shape
    probe = rng.uniform(-1.0, 1.0, size=probe_shape)

    for tensor in tensors.values():
        tensor.requires_grad = True
        tensor.zero_grad()
    F.weighted_sum(fn(), probe).backward()
    analytic = {name: np.array(t.grad if t.grad is not None else np.zeros_like(t.data), dtype=np.float64)
                for name, t in tensors.items()}

    def objective() -> float:
        return float(np.sum(fn().data * probe))

    report = GradCheckReport(label=label, tolerance=tolerance)
    for name, tensor in tensors.items():
        data = tensor.data
        if directional:
            direction = rng.normal(size=data.shape)
            direction /= max(np.linalg.norm(direction), 1e-12)
            original = data.copy()
            tensor.data = original + h * direction
            plus = objective()
            tensor.data = original - h * direction
            minus = objective()
            tensor.data = original
            numeric = (plus - minus) / (2 * h)
            worst = _relative_error(float(np.sum(analytic[name] * direction)), numeric)
            checked = 1
        else:
            flat = data.reshape(-1)
            indices = np.arange(flat.size)
            if max_elements is not None and flat.size > max_elements:
                indices = rng.choice(flat.size, size=max_elements, replace=False)
            worst = 0.0
            for index in indices:
                saved = flat[index]
                flat[index] = saved + h
                plus = objective()
                flat[index] = saved - h
                minus = objective()
                flat[index] = saved
                numeric = (plus - minus) / (2 * h)
                worst = max(worst, _relative_error(float(analytic[name].reshape(-1)[index]), numeric))
            checked = int(indices.size)
        report.entries.append(GradCheckEntry(name=name, max_rel_error=worst, checked=checked))
        logger.debug(f"{label}: {name} max rel error {worst:.3e} over {checked} checks")

    report.seconds = time.perf_counter() - started
    return report


def _uniform(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=shape))


def _check_conv2d(rng):
    x = _uniform(rng, 2, 3, 8, 8)
    w = _uniform(rng, 4, 3, 3, 3)
    b = _uniform(rng, 4)
    return lambda: F.conv2d(x, ConvParams(w, b)), {'x': x, 'weight': w, 'bias': b}


def _check_strided_grouped_conv(rng):
    x = _uniform(rng, 2, 4, 6, 6)
    w = _uniform(rng, 4, 2, 3, 3)
    b = _uniform(rng, 4)
    return lambda: F.conv2d(x, ConvParams(w, b, stride=2, groups=2)), {'x': x, 'weight': w, 'bias': b}


def _check_separable(rng):
    x = _uniform(rng, 2, 4, 6, 6)
    dw = _uniform(rng, 4, 1, 3, 3)
    db = _uniform(rng, 4)
    pw = _uniform(rng, 6, 4, 1, 1)
    pb = _uniform(rng, 6)

    def fn():
        return F.depthwise_separable_conv(x, ConvParams(dw, db, groups=4), ConvParams(pw, pb))
    return fn, {'x': x, 'depthwise': dw, 'depthwise_bias': db, 'pointwise': pw, 'pointwise_bias': pb}


def _check_deformable(rng):
    x = _uniform(rng, 1, 1, 5, 5)
    w = _uniform(rng, 1, 1, 3, 3)
    b = _uniform(rng, 1)
    # fractional offsets keep every sample away from the bilinear kinks
    base = rng.uniform(0.15, 0.85, size=(1, 18, 5, 5))
    offsets = Tensor(base + rng.integers(-1, 2, size=base.shape))
    return (lambda: F.deformable_conv2d(x, ConvParams(w, b), offsets),
            {'x': x, 'weight': w, 'bias': b, 'offsets': offsets})


def _check_max_pool(rng):
    x = _uniform(rng, 1, 2, 8, 8)
    return lambda: F.max_pool2d(x), {'x': x}


def _check_upsample(rng):
    x = _uniform(rng, 1, 2, 4, 4)
    return lambda: F.upsample_nearest2x(x), {'x': x}


def _check_batch_norm(rng):
    x = _uniform(rng, 3, 2, 4, 4)
    gamma = _uniform(rng, 2)
    beta = _uniform(rng, 2)
    state = BatchNormState(np.zeros(2), np.ones(2))
    return lambda: F.batch_norm(x, gamma, beta, state, training=True), {'x': x, 'gamma': gamma, 'beta': beta}


def _check_relu(rng):
    values = rng.uniform(0.05, 1.0, size=(1, 2, 4, 4)) * rng.choice([-1.0, 1.0], size=(1, 2, 4, 4))
    x = Tensor(values)
    return lambda: F.relu(x), {'x': x}


def _check_sigmoid(rng):
    x = _uniform(rng, 1, 2, 4, 4)
    return lambda: F.sigmoid(x), {'x': x}


def _check_add(rng):
    a = _uniform(rng, 1, 2, 4, 4)
    b = _uniform(rng, 1, 2, 4, 4)
    return lambda: F.add(a, b), {'a': a, 'b': b}


def _check_concat(rng):
    a = _uniform(rng, 1, 2, 4, 4)
    b = _uniform(rng, 1, 3, 4, 4)
    return lambda: F.concat_channels([a, b]), {'a': a, 'b': b}


def _check_replicate(rng):
    x = _uniform(rng, 1, 3, 4, 4)
    return lambda: F.replicate_channels(x, 2), {'x': x}


def _check_permute(rng):
    x = _uniform(rng, 2, 3, 4, 4)
    perm = np.array([[2, 0, 1], [0, 1, 2]])
    return lambda: F.permute_channels(x, perm), {'x': x}


def _check_warp(rng):
    x = _uniform(rng, 1, 2, 6, 6)
    py = rng.uniform(-1.0, 6.0, size=(5, 5))
    px = rng.uniform(-1.0, 6.0, size=(5, 5))
    return lambda: F.bilinear_warp(x, py, px), {'x': x}


def _check_cross_entropy(rng):
    z = _uniform(rng, 1, 2, 4, 4)
    targets = rng.uniform(0.0, 1.0, size=(1, 2, 4, 4))
    return lambda: F.sigmoid_cross_entropy_sum(z, targets), {'logits': z}


def _check_squared_error(rng):
    a = _uniform(rng, 1, 2, 4, 4)
    b = _uniform(rng, 1, 2, 4, 4)
    return lambda: F.squared_error_sum(a, b), {'a': a, 'b': b}


OP_CHECKS: Dict[str, Callable] = {
    'conv2d': _check_conv2d,
    'conv2d_strided_grouped': _check_strided_grouped_conv,
    'depthwise_separable_conv': _check_separable,
    'deformable_conv2d': _check_deformable,
    'max_pool2d': _check_max_pool,
    'upsample_nearest2x': _check_upsample,
    'batch_norm': _check_batch_norm,
    'relu': _check_relu,
    'sigmoid': _check_sigmoid,
    'add': _check_add,
    'concat_channels': _check_concat,
    'replicate_channels': _check_replicate,
    'permute_channels': _check_permute,
    'bilinear_warp': _check_warp,
    'sigmoid_cross_entropy': _check_cross_entropy,
    'squared_error': _check_squared_error,
}


def check_op(name: str, tolerance: float = 1e-4, seed: int = 0) -> GradCheckReport:
    """Gradient check of one registered primitive in double precision"""
    if name not in OP_CHECKS:
        raise KeyError(f"unknown op {name!r}; known: {', '.join(sorted(OP_CHECKS))}")
    rng = np.random.default_rng(seed)
    fn, tensors = OP_CHECKS[name](rng)
    return grad_check(fn, tensors, tolerance=tolerance, rng=rng, label=name)


def check_all_ops(tolerance: float = 1e-4, seed: int = 0) -> List[GradCheckReport]:
    return [check_op(name, tolerance, seed) for name in OP_CHECKS]
