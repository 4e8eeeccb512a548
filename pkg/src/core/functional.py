"""Differentiable primitives over NCHW tensors.

Every op computes its forward result with numpy, checks it is finite and,
when an input requires a gradient, records a closure that accumulates the
exact vector-Jacobian product into its inputs.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DimensionError
from .sampling import bilinear_gather, bilinear_position_grads, bilinear_scatter
from .tensor import Tensor, make_result

ArrayOrTensor = Union[np.ndarray, Tensor]


@dataclass
class ConvParams:
    """Weights and geometry of one convolution"""
    weight: Tensor                  # (out_ch, in_ch / groups, kH, kW)
    bias: Optional[Tensor] = None   # (out_ch,)
    stride: int = 1
    padding: Optional[int] = None   # None -> (k - 1) / 2
    groups: int = 1

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def kernel_size(self) -> Tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    def paddings(self) -> Tuple[int, int]:
        kh, kw = self.kernel_size
        if self.padding is None:
            return (kh - 1) // 2, (kw - 1) // 2
        return self.padding, self.padding

    def validate(self) -> List[str]:
        errors = []
        if self.weight.ndim != 4:
            errors.append(f"kernel must be rank 4, got rank {self.weight.ndim}")
            return errors
        kh, kw = self.kernel_size
        if kh % 2 == 0 or kw % 2 == 0:
            errors.append(f"kernel size must be odd, got {kh}x{kw}")
        if self.groups < 1:
            errors.append("groups must be positive")
        elif self.out_channels % self.groups:
            errors.append(f"groups {self.groups} does not divide out_channels {self.out_channels}")
        if self.stride < 1:
            errors.append("stride must be positive")
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            errors.append(f"bias shape {self.bias.shape} does not match out_channels {self.out_channels}")
        return errors


def _require_rank4(x: Tensor, op: str):
    if x.ndim != 4:
        raise DimensionError('rank', 4, x.ndim, op=op)


def _output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _check_conv_input(x: Tensor, p: ConvParams, op: str) -> Tuple[int, int, int, int]:
    _require_rank4(x, op)
    ConfigurationError.raise_if(p.validate())
    if x.shape[1] != p.in_channels:
        raise DimensionError('channels', p.in_channels, x.shape[1], op=op)
    kh, kw = p.kernel_size
    ph, pw = p.paddings()
    out_h = _output_size(x.shape[2], kh, p.stride, ph)
    out_w = _output_size(x.shape[3], kw, p.stride, pw)
    if out_h < 1 or out_w < 1:
        raise DimensionError('height', f">= {kh}", x.shape[2], op=op)
    return ph, pw, out_h, out_w


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, ph: int, pw: int,
            out_h: int, out_w: int) -> np.ndarray:
    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    batch, channels = x.shape[:2]
    cols = np.empty((batch, channels, kh, kw, out_h, out_w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = padded[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride]
    return cols


def _col2im(cols: np.ndarray, x_shape: Tuple[int, ...], stride: int, ph: int, pw: int) -> np.ndarray:
    batch, channels, height, width = x_shape
    kh, kw, out_h, out_w = cols.shape[2:]
    padded = np.zeros((batch, channels, height + 2 * ph, width + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            padded[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += cols[:, :, i, j]
    return padded[:, :, ph:ph + height, pw:pw + width]


def _grouped_forward(cols: np.ndarray, weight: np.ndarray, groups: int) -> np.ndarray:
    batch, channels, kh, kw, out_h, out_w = cols.shape
    out_ch = weight.shape[0]
    cols_g = cols.reshape(batch, groups, channels // groups, kh, kw, out_h, out_w)
    weight_g = weight.reshape(groups, out_ch // groups, channels // groups, kh, kw)
    out = np.einsum('bgcijhw,gocij->bgohw', cols_g, weight_g, optimize=True)
    return out.reshape(batch, out_ch, out_h, out_w)


def _grouped_backward(grad: np.ndarray, cols: np.ndarray, weight: np.ndarray,
                      groups: int) -> Tuple[np.ndarray, np.ndarray]:
    batch, channels, kh, kw, out_h, out_w = cols.shape
    out_ch = weight.shape[0]
    grad_g = grad.reshape(batch, groups, out_ch // groups, out_h, out_w)
    cols_g = cols.reshape(batch, groups, channels // groups, kh, kw, out_h, out_w)
    weight_g = weight.reshape(groups, out_ch // groups, channels // groups, kh, kw)
    d_weight = np.einsum('bgohw,bgcijhw->gocij', grad_g, cols_g, optimize=True).reshape(weight.shape)
    d_cols = np.einsum('bgohw,gocij->bgcijhw', grad_g, weight_g, optimize=True)
    return d_weight, d_cols.reshape(cols.shape)


def _add_bias(out: np.ndarray, bias: Optional[Tensor]) -> np.ndarray:
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    return out


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    ph, pw, out_h, out_w = _check_conv_input(x, p, 'conv2d')
    kh, kw = p.kernel_size
    cols = _im2col(x.data, kh, kw, p.stride, ph, pw, out_h, out_w)
    out = _add_bias(_grouped_forward(cols, p.weight.data, p.groups), p.bias)
    parents = [x, p.weight] + ([p.bias] if p.bias is not None else [])

    def backward(grad):
        d_weight, d_cols = _grouped_backward(grad, cols, p.weight.data, p.groups)
        if p.weight.requires_grad:
            p.weight.accumulate_grad(d_weight)
        if p.bias is not None and p.bias.requires_grad:
            p.bias.accumulate_grad(grad.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            x.accumulate_grad(_col2im(d_cols, x.shape, p.stride, ph, pw))

    return make_result(out, parents, 'conv2d', backward)


def depthwise_separable_conv(x: Tensor, depthwise: ConvParams, pointwise: ConvParams) -> Tensor:
    _require_rank4(x, 'depthwise_separable_conv')
    errors = []
    if depthwise.groups != x.shape[1]:
        errors.append(f"depthwise groups {depthwise.groups} must equal input channels {x.shape[1]}")
    if pointwise.kernel_size != (1, 1):
        errors.append(f"pointwise kernel must be 1x1, got {pointwise.kernel_size}")
    ConfigurationError.raise_if(errors)
    return conv2d(conv2d(x, depthwise), pointwise)


def deformable_conv2d(x: Tensor, p: ConvParams, offsets: Tensor) -> Tensor:
    """Convolution whose taps sample x at the base grid plus learned offsets.

    offsets is (B, 2*kH*kW, H_out, W_out); channel 2t holds the row and 2t+1
    the column displacement of tap t, taps in row-major order.
    """
    ph, pw, out_h, out_w = _check_conv_input(x, p, 'deformable_conv2d')
    kh, kw = p.kernel_size
    taps = kh * kw
    batch = x.shape[0]
    expected = (batch, 2 * taps, out_h, out_w)
    if offsets.shape != expected:
        axis = 'offset_channels' if offsets.ndim == 4 and offsets.shape[1] != 2 * taps else 'offset_shape'
        raise DimensionError(axis, expected, offsets.shape, op='deformable_conv2d')

    tap_y = np.repeat(np.arange(kh), kw)
    tap_x = np.tile(np.arange(kw), kh)
    base_y = tap_y[:, None, None] + (np.arange(out_h) * p.stride - ph)[None, :, None]
    base_x = tap_x[:, None, None] + (np.arange(out_w) * p.stride - pw)[None, None, :]
    off = offsets.data.reshape(batch, taps, 2, out_h, out_w)
    py = (base_y[None] + off[:, :, 0]).reshape(batch, -1)
    px = (base_x[None] + off[:, :, 1]).reshape(batch, -1)

    samples, cache = bilinear_gather(x.data, py, px)
    channels = x.shape[1]
    cols = samples.reshape(batch, channels, kh, kw, out_h, out_w)
    out = _add_bias(_grouped_forward(cols, p.weight.data, p.groups), p.bias)
    parents = [x, p.weight, offsets] + ([p.bias] if p.bias is not None else [])

    def backward(grad):
        d_weight, d_cols = _grouped_backward(grad, cols, p.weight.data, p.groups)
        if p.weight.requires_grad:
            p.weight.accumulate_grad(d_weight)
        if p.bias is not None and p.bias.requires_grad:
            p.bias.accumulate_grad(grad.sum(axis=(0, 2, 3)))
        d_samples = d_cols.reshape(batch, channels, -1)
        if x.requires_grad:
            x.accumulate_grad(bilinear_scatter(cache, d_samples))
        if offsets.requires_grad:
            d_py, d_px = bilinear_position_grads(cache, d_samples)
            d_off = np.stack([d_py.reshape(batch, taps, out_h, out_w),
                              d_px.reshape(batch, taps, out_h, out_w)], axis=2)
            offsets.accumulate_grad(d_off.reshape(offsets.shape))

    return make_result(out, parents, 'deformable_conv2d', backward)


def max_pool2d(x: Tensor, window: int = 2) -> Tensor:
    """Non-overlapping max pooling; ties go to the first element in row-major order"""
    _require_rank4(x, 'max_pool2d')
    batch, channels, height, width = x.shape
    if height % window:
        raise DimensionError('height', f"multiple of {window}", height, op='max_pool2d')
    if width % window:
        raise DimensionError('width', f"multiple of {window}", width, op='max_pool2d')
    out_h, out_w = height // window, width // window
    blocks = x.data.reshape(batch, channels, out_h, window, out_w, window)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, out_h, out_w, window * window)
    arg = np.argmax(blocks, axis=-1)[..., None]
    out = np.take_along_axis(blocks, arg, axis=-1)[..., 0]

    def backward(grad):
        routed = np.zeros(blocks.shape, dtype=grad.dtype)
        np.put_along_axis(routed, arg, grad[..., None], axis=-1)
        routed = routed.reshape(batch, channels, out_h, out_w, window, window)
        x.accumulate_grad(routed.transpose(0, 1, 2, 4, 3, 5).reshape(x.shape))

    return make_result(out, [x], 'max_pool2d', backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    _require_rank4(x, 'upsample_nearest2x')
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    batch, channels, height, width = x.shape

    def backward(grad):
        x.accumulate_grad(grad.reshape(batch, channels, height, 2, width, 2).sum(axis=(3, 5)))

    return make_result(out, [x], 'upsample_nearest2x', backward)


@dataclass
class BatchNormState:
    """Running statistics used in inference mode"""
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               training: bool = True) -> Tensor:
    _require_rank4(x, 'batch_norm')
    channels = x.shape[1]
    if gamma.shape != (channels,):
        raise DimensionError('channels', channels, gamma.shape[0], op='batch_norm')
    axes = (0, 2, 3)
    count = x.size // channels
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        unbiased = var * count / (count - 1) if count > 1 else var
        state.running_mean = ((1 - state.momentum) * state.running_mean
                              + state.momentum * mean).astype(state.running_mean.dtype)
        state.running_var = ((1 - state.momentum) * state.running_var
                             + state.momentum * unbiased).astype(state.running_var.dtype)
    else:
        mean = state.running_mean.astype(x.dtype)
        var = state.running_var.astype(x.dtype)
    inv_std = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype)
    x_hat = (x.data - mean.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
    out = gamma.data.reshape(1, -1, 1, 1) * x_hat + beta.data.reshape(1, -1, 1, 1)

    def backward(grad):
        if gamma.requires_grad:
            gamma.accumulate_grad((grad * x_hat).sum(axis=axes))
        if beta.requires_grad:
            beta.accumulate_grad(grad.sum(axis=axes))
        if not x.requires_grad:
            return
        d_hat = grad * gamma.data.reshape(1, -1, 1, 1)
        scale = inv_std.reshape(1, -1, 1, 1)
        if training:
            mean_d = d_hat.mean(axis=axes, keepdims=True)
            mean_dx = (d_hat * x_hat).mean(axis=axes, keepdims=True)
            x.accumulate_grad(scale * (d_hat - mean_d - x_hat * mean_dx))
        else:
            x.accumulate_grad(scale * d_hat)

    return make_result(out, [x, gamma, beta], 'batch_norm', backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype)

    def backward(grad):
        x.accumulate_grad(grad * mask)

    return make_result(out, [x], 'relu', backward)


def _sigmoid(values: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * values))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data).astype(x.dtype)

    def backward(grad):
        x.accumulate_grad(grad * out * (1 - out))

    return make_result(out, [x], 'sigmoid', backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        axis = 'rank' if a.ndim != b.ndim else _first_mismatch(a.shape, b.shape)
        raise DimensionError(axis, a.shape, b.shape, op='add')

    def backward(grad):
        if a.requires_grad:
            a.accumulate_grad(grad)
        if b.requires_grad:
            b.accumulate_grad(grad)

    return make_result(a.data + b.data, [a, b], 'add', backward)


def add_scalar(x: Tensor, value: float) -> Tensor:
    def backward(grad):
        x.accumulate_grad(grad)

    return make_result(x.data + x.dtype.type(value), [x], 'add_scalar', backward)


def scale(x: Tensor, factor: float) -> Tensor:
    factor = x.dtype.type(factor)

    def backward(grad):
        x.accumulate_grad(grad * factor)

    return make_result(x.data * factor, [x], 'scale', backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(grad):
        x.accumulate_grad(np.broadcast_to(grad, x.shape))

    return make_result(np.asarray(x.data.sum(), dtype=x.dtype), [x], 'sum', backward)


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """sum(x * weights) with constant weights; the gradcheck probe"""
    weights = np.asarray(weights, dtype=x.dtype)
    if weights.shape != x.shape:
        raise DimensionError('shape', x.shape, weights.shape, op='weighted_sum')

    def backward(grad):
        x.accumulate_grad(grad * weights)

    return make_result(np.asarray((x.data * weights).sum(), dtype=x.dtype), [x], 'weighted_sum', backward)


_AXIS_NAMES = ('batch', 'channels', 'height', 'width')


def _first_mismatch(a: Tuple[int, ...], b: Tuple[int, ...]) -> str:
    for index, (left, right) in enumerate(zip(a, b)):
        if left != right:
            return _AXIS_NAMES[index] if len(a) == 4 else f"dim{index}"
    return 'rank'


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise ConfigurationError(["concat_channels needs at least one tensor"])
    first = tensors[0]
    for t in tensors:
        _require_rank4(t, 'concat_channels')
        for axis in (0, 2, 3):
            if t.shape[axis] != first.shape[axis]:
                raise DimensionError(_AXIS_NAMES[axis], first.shape[axis], t.shape[axis],
                                     op='concat_channels')
    out = np.concatenate([t.data for t in tensors], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(grad):
        for t, start, stop in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                t.accumulate_grad(grad[:, start:stop])

    return make_result(out, list(tensors), 'concat_channels', backward)


def replicate_channels(x: Tensor, factor: int) -> Tensor:
    """Tile the channel axis: channel i + k*C equals channel i"""
    _require_rank4(x, 'replicate_channels')
    if factor < 1:
        raise ConfigurationError([f"replication factor must be positive, got {factor}"])
    batch, channels, height, width = x.shape
    out = np.tile(x.data, (1, factor, 1, 1))

    def backward(grad):
        x.accumulate_grad(grad.reshape(batch, factor, channels, height, width).sum(axis=1))

    return make_result(out, [x], 'replicate_channels', backward)


def permute_channels(x: Tensor, permutation: np.ndarray) -> Tensor:
    """out[b, i] = x[b, permutation[b, i]]; permutation is (N,) or (B, N)"""
    _require_rank4(x, 'permute_channels')
    perm = np.asarray(permutation, dtype=np.int64)
    if perm.ndim == 1:
        perm = np.broadcast_to(perm, (x.shape[0], perm.shape[0]))
    if perm.shape != x.shape[:2]:
        raise DimensionError('channels', x.shape[:2], perm.shape, op='permute_channels')
    index = perm[:, :, None, None]
    out = np.take_along_axis(x.data, index, axis=1)

    def backward(grad):
        routed = np.zeros(x.shape, dtype=grad.dtype)
        np.put_along_axis(routed, index, grad, axis=1)
        x.accumulate_grad(routed)

    return make_result(out, [x], 'permute_channels', backward)


def bilinear_warp(x: Tensor, py: np.ndarray, px: np.ndarray) -> Tensor:
    """Resample x at constant source coordinates py/px of shape (H', W') or (B, H', W')"""
    _require_rank4(x, 'bilinear_warp')
    batch, channels = x.shape[:2]
    py = np.asarray(py, dtype=np.float64)
    px = np.asarray(px, dtype=np.float64)
    if py.ndim == 2:
        py = np.broadcast_to(py, (batch,) + py.shape)
        px = np.broadcast_to(px, (batch,) + px.shape)
    if py.shape != px.shape or py.shape[0] != batch:
        raise DimensionError('batch', batch, py.shape, op='bilinear_warp')
    out_h, out_w = py.shape[1:]
    samples, cache = bilinear_gather(x.data, py.reshape(batch, -1), px.reshape(batch, -1))
    out = samples.reshape(batch, channels, out_h, out_w)

    def backward(grad):
        x.accumulate_grad(bilinear_scatter(cache, grad.reshape(batch, channels, -1)))

    return make_result(out, [x], 'bilinear_warp', backward)


def _as_array(value: ArrayOrTensor, dtype) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=dtype)


def sigmoid_cross_entropy_sum(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Pixel-wise sigmoid cross-entropy against soft targets, summed"""
    targets = _as_array(targets, logits.dtype)
    if targets.shape != logits.shape:
        raise DimensionError('shape', logits.shape, targets.shape, op='sigmoid_cross_entropy')
    z = logits.data
    loss = np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))

    def backward(grad):
        logits.accumulate_grad(grad * (_sigmoid(z) - targets))

    return make_result(np.asarray(loss.sum(), dtype=logits.dtype), [logits],
                       'sigmoid_cross_entropy', backward)


def squared_error_sum(a: Tensor, b: ArrayOrTensor) -> Tensor:
    """Sum of squared differences; gradient flows to both sides when b is a Tensor"""
    b_data = _as_array(b, a.dtype)
    if b_data.shape != a.shape:
        raise DimensionError('shape', a.shape, b_data.shape, op='squared_error')
    diff = a.data - b_data
    parents = [a] + ([b] if isinstance(b, Tensor) else [])

    def backward(grad):
        if a.requires_grad:
            a.accumulate_grad(2 * grad * diff)
        if isinstance(b, Tensor) and b.requires_grad:
            b.accumulate_grad(-2 * grad * diff)

    return make_result(np.asarray((diff * diff).sum(), dtype=a.dtype), parents,
                       'squared_error', backward)
