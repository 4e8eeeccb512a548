from typing import Iterator, List, Optional, Tuple

import numpy as np

from . import functional as F
from .errors import ConfigurationError
from .functional import BatchNormState, ConvParams
from .tensor import Parameter, Tensor


class Module:
    """Container of parameters, buffers and child modules.

    Children are discovered from instance attributes in definition order
    (modules, and lists/tuples/dicts of modules), so parameter naming and
    enumeration are deterministic.
    """

    training: bool = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_children(self) -> Iterator[Tuple[str, 'Module']]:
        for attr, value in vars(self).items():
            if isinstance(value, Module):
                yield attr, value
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{attr}.{index}", item
            elif isinstance(value, dict):
                for key, item in value.items():
                    if isinstance(item, Module):
                        yield f"{attr}.{key}", item

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{attr}", value
        for name, child in self.named_children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, child in self.named_children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def set_buffer(self, name: str, value: np.ndarray):
        # child names may themselves contain a dot (lists, dicts)
        for child_name, child in self.named_children():
            if name.startswith(child_name + '.'):
                child.set_buffer(name[len(child_name) + 1:], value)
                return
        raise KeyError(f"unknown buffer {name!r}")

    def modules(self) -> Iterator['Module']:
        yield self
        for _, child in self.named_children():
            yield from child.modules()

    def param_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def manifest(self) -> List[Tuple[str, Tuple[int, ...]]]:
        return [(name, p.shape) for name, p in self.named_parameters()]

    def train(self, mode: bool = True) -> 'Module':
        self.training = mode
        for _, child in self.named_children():
            child.train(mode)
        return self

    def eval(self) -> 'Module':
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def to_dtype(self, dtype) -> 'Module':
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for module in self.modules():
            module._cast_buffers(dtype)
        return self

    def _cast_buffers(self, dtype):
        pass

    def macs(self, height: int, width: int) -> int:
        """Multiply-accumulates of one forward at the given input resolution"""
        return sum(child.macs(height, width) for _, child in self.named_children())


def kaiming_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    std = np.sqrt(2.0 / max(fan_in, 1))
    return rng.normal(0.0, std, size=shape).astype(np.float32)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3,
                 rng: Optional[np.random.Generator] = None, stride: int = 1,
                 groups: int = 1, bias: bool = True, zero_init: bool = False):
        errors = []
        if in_channels % groups or out_channels % groups:
            errors.append(f"groups {groups} must divide in_channels {in_channels} "
                          f"and out_channels {out_channels}")
        if kernel_size % 2 == 0:
            errors.append(f"kernel size must be odd, got {kernel_size}")
        ConfigurationError.raise_if(errors)
        shape = (out_channels, in_channels // groups, kernel_size, kernel_size)
        if zero_init or rng is None:
            weight = np.zeros(shape, dtype=np.float32)
        else:
            weight = kaiming_normal(rng, shape, fan_in=shape[1] * kernel_size * kernel_size)
        self.weight = Parameter(weight)
        self.bias = Parameter(np.zeros(out_channels, dtype=np.float32)) if bias else None
        self.stride = stride
        self.groups = groups

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def params(self) -> ConvParams:
        return ConvParams(weight=self.weight, bias=self.bias, stride=self.stride, groups=self.groups)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.params)

    def output_size(self, height: int, width: int) -> Tuple[int, int]:
        return (height - 1) // self.stride + 1, (width - 1) // self.stride + 1

    def macs(self, height: int, width: int) -> int:
        out_h, out_w = self.output_size(height, width)
        return int(self.weight.size) * out_h * out_w


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(channels, dtype=np.float32))
        self.beta = Parameter(np.zeros(channels, dtype=np.float32))
        self.state = BatchNormState(running_mean=np.zeros(channels, dtype=np.float32),
                                    running_var=np.ones(channels, dtype=np.float32),
                                    momentum=momentum, eps=eps)

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.gamma, self.beta, self.state, training=self.training)

    def named_buffers(self, prefix: str = ""):
        yield f"{prefix}running_mean", self.state.running_mean
        yield f"{prefix}running_var", self.state.running_var

    def set_buffer(self, name: str, value: np.ndarray):
        if name not in ('running_mean', 'running_var'):
            raise KeyError(f"unknown buffer {name!r}")
        current = getattr(self.state, name)
        setattr(self.state, name, np.asarray(value, dtype=current.dtype).reshape(current.shape))

    def _cast_buffers(self, dtype):
        self.state.running_mean = self.state.running_mean.astype(dtype)
        self.state.running_var = self.state.running_var.astype(dtype)


class ConvUnit(Module):
    """Pre-activation unit: BN -> ReLU -> conv"""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, groups: int = 1):
        self.norm = BatchNorm2d(in_channels)
        self.conv = Conv2d(in_channels, out_channels, kernel_size, rng, groups=groups)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(F.relu(self.norm(x)))


class SeparableUnit(Module):
    """BN -> ReLU -> depthwise 3x3 -> pointwise 1x1"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 kernel_size: int = 3):
        self.norm = BatchNorm2d(in_channels)
        self.depthwise = Conv2d(in_channels, in_channels, kernel_size, rng, groups=in_channels)
        self.pointwise = Conv2d(in_channels, out_channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return F.depthwise_separable_conv(F.relu(self.norm(x)), self.depthwise.params,
                                          self.pointwise.params)


class DepthwiseUnit(Module):
    """BN -> ReLU -> depthwise 3x3, channel count unchanged"""

    def __init__(self, channels: int, rng: np.random.Generator, kernel_size: int = 3):
        self.norm = BatchNorm2d(channels)
        self.depthwise = Conv2d(channels, channels, kernel_size, rng, groups=channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.depthwise(F.relu(self.norm(x)))


class DeformableConv2d(Module):
    """Deformable convolution with a zero-initialised sibling offset conv,
    so a freshly built layer computes exactly the standard convolution."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 kernel_size: int = 3):
        taps = kernel_size * kernel_size
        self.offset_conv = Conv2d(in_channels, 2 * taps, kernel_size, zero_init=True)
        self.conv = Conv2d(in_channels, out_channels, kernel_size, rng)

    def forward(self, x: Tensor) -> Tensor:
        offsets = self.offset_conv(x)
        return F.deformable_conv2d(x, self.conv.params, offsets)


class DeformableUnit(Module):
    """BN -> ReLU -> deformable 3x3"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.norm = BatchNorm2d(in_channels)
        self.deform = DeformableConv2d(in_channels, out_channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.deform(F.relu(self.norm(x)))
