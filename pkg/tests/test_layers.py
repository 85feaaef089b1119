"""Layers: shape algebra, convolution against a direct reference, gradients."""

import numpy as np
import pytest

from gradcheck import check_param_gradients, numeric_gradient, assert_gradients_match
from pve.layers import (Conv2d, Dense, Flatten, Network, ReLU, Sigmoid,
                        conv_output_size, he_uniform, xavier_uniform)
from pve.tensor import AutodiffError, Tensor, no_grad


def conv2d_reference(x, w, b, stride):
    """Direct same-padding convolution in float64 (loop over output pixels)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    B, H, W, C = x.shape
    k = w.shape[0]
    out_h = -(-H // stride)
    out_w = -(-W // stride)
    pad_h = max((out_h - 1) * stride + k - H, 0)
    pad_w = max((out_w - 1) * stride + k - W, 0)
    top, left = pad_h // 2, pad_w // 2
    xp = np.zeros((B, H + pad_h, W + pad_w, C))
    xp[:, top:top + H, left:left + W, :] = x
    out = np.zeros((B, out_h, out_w, w.shape[3]))
    for i in range(out_h):
        for j in range(out_w):
            patch = xp[:, i * stride:i * stride + k, j * stride:j * stride + k, :]
            out[:, i, j, :] = np.tensordot(patch, w, axes=([1, 2, 3], [0, 1, 2]))
    return out + np.asarray(b, dtype=np.float64)


def test_conv_output_size_is_ceil_division():
    assert conv_output_size(64, 2) == 32
    assert conv_output_size(32, 2) == 16
    assert conv_output_size(16, 2) == 8
    assert conv_output_size(7, 2) == 4
    assert conv_output_size(5, 3) == 2
    assert conv_output_size(9, 1) == 9


@pytest.mark.parametrize("hw,kernel,stride", [
    ((8, 8), 5, 2), ((7, 5), 3, 2), ((6, 9), 5, 2), ((5, 5), 3, 1), ((4, 7), 2, 2),
])
def test_conv2d_matches_direct_reference(hw, kernel, stride):
    rg = np.random.default_rng(42)
    h, w = hw
    x = rg.normal(size=(2, h, w, 3)).astype(np.float32)
    conv = Conv2d(3, 4, kernel=kernel, stride=stride, rng=rg)
    conv.bias.data = rg.normal(size=4).astype(np.float32)
    got = conv.forward(Tensor(x)).data
    want = conv2d_reference(x, conv.weight.data, conv.bias.data, stride)
    assert got.shape == want.shape
    np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-5)


def test_conv2d_delta_kernel_is_identity():
    rg = np.random.default_rng(0)
    x = rg.uniform(size=(1, 6, 6, 2)).astype(np.float32)
    conv = Conv2d(2, 2, kernel=5, stride=1, rng=rg)
    w = np.zeros((5, 5, 2, 2), dtype=np.float32)
    w[2, 2] = np.eye(2, dtype=np.float32)  # center tap, channel passthrough
    conv.weight.data = w
    out = conv.forward(Tensor(x)).data
    np.testing.assert_allclose(out, x, atol=1e-6)


def test_conv2d_gradients():
    rg = np.random.default_rng(7)
    x = Tensor(rg.normal(size=(2, 5, 4, 2)).astype(np.float32), requires_grad=True)
    conv = Conv2d(2, 3, kernel=3, stride=2, rng=rg)
    conv.bias.data = rg.normal(size=3).astype(np.float32) * np.float32(0.1)

    def loss():
        return conv.forward(x).square().sum()

    # the loss is quadratic in every coordinate, so the central difference
    # has no truncation error and a larger h suppresses float32 round-off
    check_param_gradients(loss, [x, conv.weight, conv.bias], h=0.05)


def test_dense_forward_and_gradients():
    rg = np.random.default_rng(8)
    x = Tensor(rg.normal(size=(3, 4)).astype(np.float32), requires_grad=True)
    layer = Dense(4, 2, rng=rg)
    layer.bias.data = rg.normal(size=2).astype(np.float32)
    out = layer.forward(x)
    np.testing.assert_allclose(
        out.data, x.data @ layer.weight.data + layer.bias.data, rtol=1e-5)

    def loss():
        return layer.forward(x).square().sum()

    check_param_gradients(loss, [x, layer.weight, layer.bias])


def test_dense_rejects_bad_shapes():
    layer = Dense(4, 2)
    with pytest.raises(AutodiffError):
        layer.forward(Tensor(np.zeros((3, 5), dtype=np.float32)))
    with pytest.raises(AutodiffError):
        layer.forward(Tensor(np.zeros((3, 4, 1), dtype=np.float32)))


def test_relu_dead_units_get_zero_grad():
    x = Tensor(np.array([[-1.0, 2.0, -3.0]], dtype=np.float32), requires_grad=True)
    ReLU().forward(x).sum().backward()
    np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0]])


def test_sigmoid_layer_matches_function():
    x = np.linspace(-3, 3, 7, dtype=np.float32).reshape(1, 7)
    out = Sigmoid().forward(Tensor(x)).data
    np.testing.assert_allclose(out, 1.0 / (1.0 + np.exp(-x)), rtol=1e-6)
    assert np.all(out > 0) and np.all(out < 1)


def test_flatten_shape_and_grad():
    rg = np.random.default_rng(9)
    x = Tensor(rg.normal(size=(2, 3, 4, 5)).astype(np.float32), requires_grad=True)
    out = Flatten().forward(x)
    assert out.shape == (2, 60)
    out.square().sum().backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data, rtol=1e-6)


def test_he_uniform_bounds_and_determinism():
    fan_in = 50
    bound = np.sqrt(6.0 / fan_in)
    w1 = he_uniform(np.random.default_rng(3), (fan_in, 200), fan_in)
    w2 = he_uniform(np.random.default_rng(3), (fan_in, 200), fan_in)
    assert w1.dtype == np.float32
    assert np.all(np.abs(w1) <= bound)
    assert np.max(np.abs(w1)) > 0.8 * bound  # actually fills the range
    np.testing.assert_array_equal(w1, w2)


def test_xavier_uniform_bounds():
    fan_in, fan_out = 30, 70
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    w = xavier_uniform(np.random.default_rng(4), (fan_in, fan_out), fan_in, fan_out)
    assert np.all(np.abs(w) <= bound)
    assert np.max(np.abs(w)) > 0.8 * bound


def test_layer_init_is_rng_driven():
    a = Dense(4, 3, rng=np.random.default_rng(5))
    b = Dense(4, 3, rng=np.random.default_rng(5))
    c = Dense(4, 3, rng=np.random.default_rng(6))
    np.testing.assert_array_equal(a.weight.data, b.weight.data)
    assert np.any(a.weight.data != c.weight.data)
    np.testing.assert_array_equal(a.bias.data, np.zeros(3, dtype=np.float32))


def test_network_params_and_state_dict_roundtrip():
    rg = np.random.default_rng(10)
    net = Network([
        Dense(6, 4, rng=rg, name="fc1"), ReLU(),
        Dense(4, 2, rng=rg, name="fc2"),
    ])
    names = [n for n, _ in net.params()]
    assert names == ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"]

    state = net.state_dict()
    other = Network([
        Dense(6, 4, rng=np.random.default_rng(99), name="fc1"), ReLU(),
        Dense(4, 2, rng=np.random.default_rng(99), name="fc2"),
    ])
    other.load_state_dict(state)
    x = Tensor(np.random.default_rng(1).normal(size=(3, 6)).astype(np.float32))
    with no_grad():
        np.testing.assert_array_equal(net.forward(x).data, other.forward(x).data)


def test_load_state_dict_validates():
    net = Network([Dense(3, 2, name="fc")])
    state = net.state_dict()
    bad = dict(state)
    bad["fc.weight"] = np.zeros((2, 2), dtype=np.float32)
    with pytest.raises(ValueError):
        net.load_state_dict(bad)
    del state["fc.bias"]
    with pytest.raises(KeyError):
        net.load_state_dict(state)


def test_network_zero_grad():
    net = Network([Dense(3, 2, name="fc")])
    x = Tensor(np.ones((1, 3), dtype=np.float32))
    net.forward(x).sum().backward()
    assert net.params()[0][1].grad is not None
    net.zero_grad()
    assert all(t.grad is None for t in net.param_tensors())
