import numpy as np
import pytest

from frprune.tensor import kernels
from frprune.util.errors import LabelRangeError, MissingContextError, ShapeMismatchError


def naive_conv(x, w, b, stride, padding):
    batch, c_in, height, width = x.shape
    c_out, _, kh, kw = w.shape
    padded = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h_out = (height + 2 * padding - kh) // stride + 1
    w_out = (width + 2 * padding - kw) // stride + 1
    out = np.zeros((batch, c_out, h_out, w_out))
    for n in range(batch):
        for o in range(c_out):
            for i in range(h_out):
                for j in range(w_out):
                    patch = padded[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[n, o, i, j] = np.sum(patch * w[o]) + (b[o] if b is not None else 0.0)
    return out


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_forward_matches_naive_loop(stride, padding):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 7, 7)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    out, _ = kernels.conv2d_forward(x, w, b, stride, padding)
    np.testing.assert_allclose(out, naive_conv(x, w, b, stride, padding), rtol=1e-5, atol=1e-5)


def test_conv2d_input_grad_is_adjoint_of_forward():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
    w = rng.standard_normal((5, 3, 3, 3)).astype(np.float32)
    out, ctx = kernels.conv2d_forward(x, w, None, 2, 1)
    dy = rng.standard_normal(out.shape).astype(np.float32)
    dx, d_weight, d_bias = kernels.conv2d_backward(dy, ctx)
    # <conv(x), dy> == <x, conv^T(dy)> and == <w, dW>
    lhs = float(np.sum(out.astype(np.float64) * dy))
    assert np.isclose(lhs, float(np.sum(x.astype(np.float64) * dx)), rtol=1e-4)
    assert np.isclose(lhs, float(np.sum(w.astype(np.float64) * d_weight)), rtol=1e-4)
    np.testing.assert_allclose(d_bias, dy.sum(axis=(0, 2, 3)), rtol=1e-5)


def test_conv2d_shape_errors():
    x = np.zeros((1, 3, 5, 5), dtype=np.float32)
    with pytest.raises(ShapeMismatchError):
        kernels.conv2d_forward(x, np.zeros((2, 4, 3, 3), dtype=np.float32), None)
    with pytest.raises(ShapeMismatchError):
        kernels.conv2d_forward(np.zeros((1, 3, 2, 2), dtype=np.float32), np.zeros((2, 3, 3, 3), dtype=np.float32),
                               None)
    with pytest.raises(MissingContextError):
        kernels.conv2d_backward(np.zeros((1, 2, 3, 3), dtype=np.float32), None)


def test_conv2d_macs():
    assert kernels.conv2d_macs(1, 1, 1, 1, 4, 4) == 16
    assert kernels.conv2d_macs(3, 8, 3, 3, 10, 10) == 3 * 8 * 9 * 100


def test_maxpool_ties_go_to_first_position_and_odd_edges_are_dropped():
    x = np.array([[[[1, 1, 0],
                    [0, 1, 0],
                    [5, 5, 5]]]], dtype=np.float32)
    out, ctx = kernels.maxpool2_forward(x)
    assert out.shape == (1, 1, 1, 1)
    assert out[0, 0, 0, 0] == 1
    assert ctx.argmax[0, 0, 0, 0] == 0
    routed = kernels.maxpool2_scatter(np.array([[[[3.0]]]], dtype=np.float32), ctx)
    expected = np.zeros((1, 1, 3, 3), dtype=np.float32)
    expected[0, 0, 0, 0] = 3.0
    np.testing.assert_array_equal(routed, expected)


def test_maxpool_backward_routes_to_argmax():
    x = np.array([[[[1, 2], [4, 3]]]], dtype=np.float32)
    out, ctx = kernels.maxpool2_forward(x)
    assert out[0, 0, 0, 0] == 4
    dx = kernels.maxpool2_backward(np.ones((1, 1, 1, 1), dtype=np.float32), ctx)
    np.testing.assert_array_equal(dx, [[[[0, 0], [1, 0]]]])


def test_batchnorm_training_updates_running_statistics():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 2, 3, 3)).astype(np.float32) * 2 + 1
    running_mean = np.zeros(2, dtype=np.float32)
    running_var = np.ones(2, dtype=np.float32)
    out, _ = kernels.batchnorm_forward(x, np.ones(2, dtype=np.float32), np.zeros(2, dtype=np.float32),
                                       running_mean, running_var, training=True)
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0, atol=1e-5)
    np.testing.assert_allclose(running_mean, 0.1 * x.mean(axis=(0, 2, 3)), rtol=1e-5)
    count = 4 * 9
    unbiased = x.var(axis=(0, 2, 3)) * count / (count - 1)
    np.testing.assert_allclose(running_var, 0.9 + 0.1 * unbiased, rtol=1e-5)


def test_batchnorm_eval_uses_running_statistics():
    x = np.full((1, 1, 2, 2), 3.0, dtype=np.float32)
    out, _ = kernels.batchnorm_forward(x, np.array([2.0], dtype=np.float32), np.array([1.0], dtype=np.float32),
                                       np.array([1.0], dtype=np.float32), np.array([4.0], dtype=np.float32),
                                       training=False, eps=0.0)
    np.testing.assert_allclose(out, 3.0)


def test_global_avgpool_and_linear():
    x = np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2)
    pooled, shape = kernels.global_avgpool_forward(x)
    np.testing.assert_allclose(pooled, [[1.5, 5.5]])
    np.testing.assert_allclose(kernels.global_avgpool_backward(np.ones((1, 2), dtype=np.float32), shape), 0.25)
    y, ctx = kernels.linear_forward(pooled, np.array([[1.0, -1.0]], dtype=np.float32),
                                    np.array([0.5], dtype=np.float32))
    np.testing.assert_allclose(y, [[-3.5]])


def test_softmax_xent_gradient_rows_sum_to_zero():
    rng = np.random.default_rng(4)
    logits = rng.standard_normal((5, 3)).astype(np.float32)
    labels = np.array([0, 1, 2, 1, 0])
    loss, grad = kernels.softmax_xent(logits, labels)
    probs = kernels.softmax(logits.astype(np.float64))
    assert np.isclose(loss, -np.mean(np.log(probs[np.arange(5), labels])), rtol=1e-5)
    np.testing.assert_allclose(grad.sum(axis=1), 0, atol=1e-6)
    with pytest.raises(LabelRangeError):
        kernels.softmax_xent(logits, np.array([0, 1, 3, 1, 0]))


def test_relu_and_uniform_softmax_examples():
    out, mask = kernels.relu_forward(np.array([-1.0, 0.0, 2.0], dtype=np.float32))
    np.testing.assert_array_equal(out, [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(mask, [False, False, True])
    loss, grad = kernels.softmax_xent(np.zeros((1, 2), dtype=np.float32), np.array([0]))
    assert loss == pytest.approx(np.log(2.0), rel=1e-6)
    np.testing.assert_allclose(grad, [[-0.5, 0.5]], atol=1e-6)
