import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.core import functional as F
from src.core.errors import ConfigurationError, DimensionError, NonFiniteError
from src.core.functional import BatchNormState, ConvParams
from src.core.gradcheck import OP_CHECKS, check_op, grad_check
from src.core.tensor import Parameter, Tensor


def naive_conv(x, w, b, stride=1, pad=None):
    out_c, in_c, kh, kw = w.shape
    pad = (kh - 1) // 2 if pad is None else pad
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    batch, _, height, width = xp.shape
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    out = np.zeros((batch, out_c, out_h, out_w))
    for n in range(batch):
        for o in range(out_c):
            for i in range(out_h):
                for j in range(out_w):
                    patch = xp[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[n, o, i, j] = np.sum(patch * w[o]) + (b[o] if b is not None else 0.0)
    return out


class TestConvolution:
    def test_matches_direct_loops(self, rng):
        x = rng.normal(size=(2, 3, 6, 5))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        out = F.conv2d(Tensor(x), ConvParams(Tensor(w), Tensor(b)))
        np.testing.assert_allclose(out.data, naive_conv(x, w, b), rtol=1e-10, atol=1e-10)

    def test_strided_output_size(self, rng):
        x = rng.normal(size=(1, 2, 7, 7))
        w = rng.normal(size=(3, 2, 3, 3))
        out = F.conv2d(Tensor(x), ConvParams(Tensor(w), stride=2))
        np.testing.assert_allclose(out.data, naive_conv(x, w, None, stride=2), atol=1e-10)

    def test_grouped_equals_split_convolutions(self, rng):
        x = rng.normal(size=(1, 4, 5, 5))
        w = rng.normal(size=(6, 2, 3, 3))
        out = F.conv2d(Tensor(x), ConvParams(Tensor(w), groups=2)).data
        first = naive_conv(x[:, :2], w[:3], None)
        second = naive_conv(x[:, 2:], w[3:], None)
        np.testing.assert_allclose(out, np.concatenate([first, second], axis=1), atol=1e-10)

    def test_channel_mismatch_names_the_axis(self, rng):
        x = Tensor(rng.normal(size=(1, 3, 4, 4)))
        w = Tensor(rng.normal(size=(2, 5, 3, 3)))
        with pytest.raises(DimensionError) as info:
            F.conv2d(x, ConvParams(w))
        assert info.value.axis == 'channels'

    def test_even_kernel_rejected(self, rng):
        x = Tensor(rng.normal(size=(1, 1, 4, 4)))
        with pytest.raises(ConfigurationError):
            F.conv2d(x, ConvParams(Tensor(rng.normal(size=(1, 1, 2, 2)))))


@settings(max_examples=100, deadline=None)
@given(batch=st.integers(1, 2), cin=st.integers(1, 4), cout=st.integers(1, 4),
       height=st.integers(3, 8), width=st.integers(3, 8), kernel=st.sampled_from([1, 3]),
       seed=st.integers(0, 2 ** 16))
def test_zero_offset_deformable_equals_convolution(batch, cin, cout, height, width, kernel, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(batch, cin, height, width)).astype(np.float32))
    p = ConvParams(Tensor(rng.normal(size=(cout, cin, kernel, kernel)).astype(np.float32)),
                   Tensor(rng.normal(size=cout).astype(np.float32)))
    offsets = Tensor(np.zeros((batch, 2 * kernel * kernel, height, width), dtype=np.float32))
    diff = np.abs(F.deformable_conv2d(x, p, offsets).data - F.conv2d(x, p).data)
    assert diff.max() < 1e-6


def test_deformable_integer_shift_samples_neighbour(rng):
    x = rng.normal(size=(1, 1, 5, 5))
    # a single 1x1 tap displaced one column to the right reads x[..., j + 1]
    p = ConvParams(Tensor(np.ones((1, 1, 1, 1))))
    offsets = np.zeros((1, 2, 5, 5))
    offsets[:, 1] = 1.0
    out = F.deformable_conv2d(Tensor(x), p, Tensor(offsets)).data
    np.testing.assert_allclose(out[0, 0, :, :4], x[0, 0, :, 1:])
    np.testing.assert_allclose(out[0, 0, :, 4], 0.0)


def test_deformable_rejects_wrong_offset_channels(rng):
    x = Tensor(rng.normal(size=(1, 2, 4, 4)))
    p = ConvParams(Tensor(rng.normal(size=(2, 2, 3, 3))))
    with pytest.raises(DimensionError):
        F.deformable_conv2d(x, p, Tensor(np.zeros((1, 9, 4, 4))))


class TestPoolingAndResampling:
    def test_max_pool_tie_routes_gradient_to_first(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        F.sum_all(F.max_pool2d(x)).backward()
        np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])

    def test_max_pool_odd_size_rejected(self):
        with pytest.raises(DimensionError):
            F.max_pool2d(Tensor(np.zeros((1, 1, 3, 4))))

    def test_upsample_repeats_pixels(self):
        x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
        out = F.upsample_nearest2x(x).data[0, 0]
        np.testing.assert_array_equal(out, [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])


class TestBatchNorm:
    def test_training_normalises_batch(self, rng):
        x = Tensor(rng.normal(3.0, 2.0, size=(4, 2, 3, 3)))
        state = BatchNormState(np.zeros(2), np.ones(2))
        out = F.batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), state, training=True).data
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, rtol=1e-3)
        assert np.all(state.running_mean != 0)

    def test_inference_uses_running_statistics(self, rng):
        x = rng.normal(size=(2, 2, 2, 2))
        state = BatchNormState(np.array([1.0, -1.0]), np.array([4.0, 1.0]), eps=0.0)
        out = F.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), state, training=False).data
        np.testing.assert_allclose(out[:, 0], (x[:, 0] - 1.0) / 2.0)
        np.testing.assert_allclose(out[:, 1], x[:, 1] + 1.0)


class TestChannelOps:
    def test_concat_mismatch_reports_height(self, rng):
        a = Tensor(rng.normal(size=(1, 2, 4, 4)))
        b = Tensor(rng.normal(size=(1, 2, 2, 4)))
        with pytest.raises(DimensionError) as info:
            F.concat_channels([a, b])
        assert info.value.axis == 'height'

    def test_permute_channels_per_sample(self):
        x = Tensor(np.arange(6.0).reshape(2, 3, 1, 1))
        out = F.permute_channels(x, np.array([[2, 1, 0], [0, 1, 2]])).data[..., 0, 0]
        np.testing.assert_array_equal(out, [[2, 1, 0], [3, 4, 5]])

    def test_replicate_channels(self):
        x = Tensor(np.arange(2.0).reshape(1, 2, 1, 1))
        assert F.replicate_channels(x, 2).shape == (1, 4, 1, 1)


class TestLosses:
    def test_cross_entropy_is_stable_for_large_logits(self):
        logits = Tensor(np.array([[[[1000.0, -1000.0]]]]))
        loss = F.sigmoid_cross_entropy_sum(logits, np.array([[[[1.0, 0.0]]]]))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_squared_error_value(self):
        a = Tensor(np.array([1.0, 2.0, 3.0]).reshape(1, 1, 1, 3))
        assert F.squared_error_sum(a, np.zeros((1, 1, 1, 3))).item() == pytest.approx(14.0)


def test_non_finite_forward_is_reported():
    with pytest.raises(NonFiniteError):
        F.scale(Tensor(np.array([1e308, 1.0])), 1e10)


def test_leaf_gradients_survive_backward(rng):
    w = Parameter(rng.normal(size=(2, 1, 3, 3)))
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    F.sum_all(F.relu(F.conv2d(x, ConvParams(w)))).backward()
    assert w.grad is not None and w.grad.shape == w.shape


@pytest.mark.parametrize("name", sorted(OP_CHECKS))
def test_op_gradients_match_finite_differences(name):
    report = check_op(name, tolerance=1e-4, seed=1)
    assert report.passed, report.to_dict()


def test_unknown_op_name():
    with pytest.raises(KeyError):
        check_op("no_such_op")


def test_grad_check_detects_a_wrong_gradient(rng):
    x = Tensor(rng.normal(size=(1, 1, 2, 2)), requires_grad=True)

    def broken():
        out = F.scale(x, 2.0)
        # rewire the tape so the reported gradient is off by a factor of two
        original = out._backward
        out._backward = lambda grad: original(grad * 2.0)
        return out

    assert not grad_check(broken, {'x': x}, tolerance=1e-4, rng=rng).passed
