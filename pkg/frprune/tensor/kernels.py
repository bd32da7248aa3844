"""
Forward and backward numeric kernels for the fixed layer set (conv, bn, relu, 2x2 maxpool, global average
pool, linear, add, softmax cross-entropy).

Tensors are float32 ``numpy.ndarray`` in NCHW layout.  Every forward kernel returns ``(output, context)``;
the matching backward kernel needs that context.  Outputs are checked for NaN/Inf.
"""
from dataclasses import dataclass
from typing import Optional, Tuple
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from frprune.util.errors import ShapeMismatchError, MissingContextError, LabelRangeError
from frprune.util.general import check_finite

Tensor = np.ndarray

DTYPE = np.float32


def as_tensor(values) -> Tensor:
    """ Contiguous float32 copy-if-needed of anything array-like """
    return np.ascontiguousarray(values, dtype=DTYPE)


def _require_context(ctx, kernel: str):
    if ctx is None:
        raise MissingContextError(f"{kernel} needs the context saved by the forward pass")


def _require_rank(tensor: Tensor, rank: int, what: str) -> None:
    if tensor.ndim != rank:
        raise ShapeMismatchError(f"{what} rank", (rank,), (tensor.ndim,))


# ----------------------------------------------------------------------------------------------------------------
# Convolution

@dataclass
class ConvContext:
    padded_input: Tensor
    weight: Tensor
    input_shape: Tuple[int, ...]
    stride: int
    padding: int


def conv2d_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """ Spatial output size of a convolution, floor convention """
    return (size + 2 * padding - kernel) // stride + 1


def _windows(padded: Tensor, kh: int, kw: int, stride: int) -> Tensor:
    """ Strided view (B, C, Hout, Wout, Kh, Kw) over a padded input, no copy """
    return sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d_forward(x: Tensor, weight: Tensor, bias: Optional[Tensor], stride: int = 1,
                   padding: int = 0) -> Tuple[Tensor, ConvContext]:
    """
    Direct 2D convolution (cross-correlation).
    :param x: input (B, Cin, H, W)
    :param weight: filters (Cout, Cin, Kh, Kw)
    :param bias: (Cout,) or None
    :param stride: stride in both spatial dimensions
    :param padding: zero padding in both spatial dimensions
    :return: output (B, Cout, Hout, Wout) and the context for conv2d_backward
    """
    _require_rank(x, 4, "conv2d input")
    _require_rank(weight, 4, "conv2d weight")
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError("conv2d input channels (Cin of input vs weight)", (weight.shape[1],), (x.shape[1],))
    c_out, _, kh, kw = weight.shape
    if bias is not None and bias.shape != (c_out,):
        raise ShapeMismatchError("conv2d bias", (c_out,), bias.shape)
    h_out = conv2d_output_size(x.shape[2], kh, stride, padding)
    w_out = conv2d_output_size(x.shape[3], kw, stride, padding)
    if h_out <= 0 or w_out <= 0:
        raise ShapeMismatchError("conv2d spatial size (H, W) too small for kernel", (kh, kw), x.shape[2:])

    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    windows = _windows(padded, kh, kw, stride)
    out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias[None, :, None, None]
    out = as_tensor(out)
    return check_finite(out, "conv2d_forward"), ConvContext(padded, weight, x.shape, stride, padding)


def conv2d_input_grad(dy: Tensor, weight: Tensor, input_shape: Tuple[int, ...], stride: int,
                      padding: int) -> Tensor:
    """
    Gradient of a convolution with respect to its input (a transposed convolution of dy with weight).
    Also used by the relevance engine to spread per-output quotients back onto input positions.
    """
    batch, c_in, height, width = input_shape
    _, _, kh, kw = weight.shape
    h_out, w_out = dy.shape[2], dy.shape[3]
    dx_padded = np.zeros((batch, c_in, height + 2 * padding, width + 2 * padding), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            contribution = np.tensordot(dy, weight[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
            dx_padded[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += contribution
    if padding:
        return dx_padded[:, :, padding:padding + height, padding:padding + width]
    return dx_padded


def conv2d_backward(dy: Tensor, ctx: Optional[ConvContext]) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Gradients of conv2d_forward.
    :param dy: upstream gradient (B, Cout, Hout, Wout)
    :param ctx: context returned by conv2d_forward
    :return: (d_input, d_weight, d_bias)
    """
    _require_context(ctx, "conv2d_backward")
    c_out, _, kh, kw = ctx.weight.shape
    if dy.ndim != 4 or dy.shape[1] != c_out:
        raise ShapeMismatchError("conv2d upstream gradient channels", (c_out,), dy.shape[1:2])
    windows = _windows(ctx.padded_input, kh, kw, ctx.stride)
    d_weight = as_tensor(np.tensordot(dy, windows, axes=([0, 2, 3], [0, 2, 3])))
    d_bias = as_tensor(dy.sum(axis=(0, 2, 3)))
    d_input = conv2d_input_grad(dy, ctx.weight, ctx.input_shape, ctx.stride, ctx.padding)
    return check_finite(d_input, "conv2d_backward"), d_weight, d_bias


def conv2d_macs(c_in: int, c_out: int, kh: int, kw: int, h_out: int, w_out: int) -> int:
    """ Multiply-accumulates of one convolution for a single sample """
    return kh * kw * c_in * c_out * h_out * w_out


# ----------------------------------------------------------------------------------------------------------------
# Elementwise and pooling

def relu_forward(x: Tensor) -> Tuple[Tensor, Tensor]:
    mask = x > 0
    return check_finite(as_tensor(x * mask), "relu_forward"), mask


def relu_backward(dy: Tensor, mask: Optional[Tensor]) -> Tensor:
    _require_context(mask, "relu_backward")
    if dy.shape != mask.shape:
        raise ShapeMismatchError("relu upstream gradient", mask.shape, dy.shape)
    return as_tensor(dy * mask)


@dataclass
class MaxPoolContext:
    """ Argmax record of a 2x2/2 max pool: index 0..3 (row-major in the window) per output position """
    argmax: np.ndarray
    input_shape: Tuple[int, ...]


def maxpool2_forward(x: Tensor) -> Tuple[Tensor, MaxPoolContext]:
    """
    2x2 max pooling with stride 2.  Odd trailing rows/columns are dropped.  Ties go to the first position of
    the window in row-major order.
    """
    _require_rank(x, 4, "maxpool2 input")
    batch, channels, height, width = x.shape
    h_out, w_out = height // 2, width // 2
    if h_out == 0 or w_out == 0:
        raise ShapeMismatchError("maxpool2 spatial size (H, W) at least", (2, 2), (height, width))
    cropped = x[:, :, :2 * h_out, :2 * w_out]
    windows = cropped.reshape(batch, channels, h_out, 2, w_out, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(batch, channels, h_out, w_out, 4)
    argmax = windows.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(windows, argmax[..., None].astype(np.intp), axis=-1)[..., 0]
    return check_finite(as_tensor(out), "maxpool2_forward"), MaxPoolContext(argmax, x.shape)


def maxpool2_scatter(values: Tensor, ctx: Optional[MaxPoolContext]) -> Tensor:
    """
    Route every pooled value to its recorded argmax input position; all other positions get 0.
    Serves as the maxpool backward pass and as winner-take-all relevance redistribution.
    """
    _require_context(ctx, "maxpool2_scatter")
    if values.shape != ctx.argmax.shape:
        raise ShapeMismatchError("maxpool2 pooled tensor", ctx.argmax.shape, values.shape)
    batch, channels, height, width = ctx.input_shape
    h_out, w_out = ctx.argmax.shape[2], ctx.argmax.shape[3]
    one_hot = ctx.argmax[..., None] == np.arange(4, dtype=np.int8)
    routed = (one_hot * values[..., None]).reshape(batch, channels, h_out, w_out, 2, 2)
    routed = routed.transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, 2 * h_out, 2 * w_out)
    out = np.zeros(ctx.input_shape, dtype=DTYPE)
    out[:, :, :2 * h_out, :2 * w_out] = routed
    return out


def maxpool2_backward(dy: Tensor, ctx: Optional[MaxPoolContext]) -> Tensor:
    return maxpool2_scatter(dy, ctx)


def global_avgpool_forward(x: Tensor) -> Tuple[Tensor, Tuple[int, ...]]:
    """ Mean over the spatial dimensions, (B, C, H, W) -> (B, C) """
    _require_rank(x, 4, "global_avgpool input")
    return check_finite(as_tensor(x.mean(axis=(2, 3))), "global_avgpool_forward"), x.shape


def global_avgpool_backward(dy: Tensor, input_shape: Optional[Tuple[int, ...]]) -> Tensor:
    _require_context(input_shape, "global_avgpool_backward")
    batch, channels, height, width = input_shape
    if dy.shape != (batch, channels):
        raise ShapeMismatchError("global_avgpool upstream gradient", (batch, channels), dy.shape)
    return as_tensor(np.broadcast_to(dy[:, :, None, None] / (height * width), input_shape))


def linear_forward(x: Tensor, weight: Tensor, bias: Optional[Tensor]) -> Tuple[Tensor, Tensor]:
    """
    Affine layer y = x W^T + b.
    :param x: (B, in_features)
    :param weight: (out_features, in_features)
    :param bias: (out_features,) or None
    """
    _require_rank(x, 2, "linear input")
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError("linear in_features (input vs weight)", (weight.shape[1],), (x.shape[1],))
    out = x @ weight.T
    if bias is not None:
        out = out + bias
    return check_finite(as_tensor(out), "linear_forward"), x


def linear_backward(dy: Tensor, x: Optional[Tensor], weight: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    _require_context(x, "linear_backward")
    if dy.shape != (x.shape[0], weight.shape[0]):
        raise ShapeMismatchError("linear upstream gradient", (x.shape[0], weight.shape[0]), dy.shape)
    return as_tensor(dy @ weight), as_tensor(dy.T @ x), as_tensor(dy.sum(axis=0))


def add_forward(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatchError("add operands", a.shape, b.shape)
    return check_finite(as_tensor(a + b), "add_forward")


# ----------------------------------------------------------------------------------------------------------------
# Batch normalisation

@dataclass
class BatchNormContext:
    normalized: Tensor
    inv_std: Tensor
    gamma: Tensor
    training: bool


def batchnorm_forward(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: Tensor, running_var: Tensor,
                      training: bool, momentum: float = 0.1,
                      eps: float = 1e-5) -> Tuple[Tensor, BatchNormContext]:
    """
    Per-channel normalisation and affine transform.  In training mode the batch statistics are used and the
    running statistics are updated in place (unbiased variance, exponential average with `momentum`).
    """
    _require_rank(x, 4, "batchnorm input")
    channels = x.shape[1]
    for name, tensor in (("gamma", gamma), ("beta", beta), ("running_mean", running_mean),
                         ("running_var", running_var)):
        if tensor.shape != (channels,):
            raise ShapeMismatchError(f"batchnorm {name}", (channels,), tensor.shape)
    if training:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        count = x.shape[0] * x.shape[2] * x.shape[3]
        unbiased = var * count / max(count - 1, 1)
        running_mean *= (1 - momentum)
        running_mean += momentum * mean
        running_var *= (1 - momentum)
        running_var += momentum * unbiased
    else:
        mean, var = running_mean, running_var
    inv_std = as_tensor(1.0 / np.sqrt(var + eps))
    normalized = as_tensor((x - mean[None, :, None, None]) * inv_std[None, :, None, None])
    out = normalized * gamma[None, :, None, None] + beta[None, :, None, None]
    return check_finite(as_tensor(out), "batchnorm_forward"), BatchNormContext(normalized, inv_std, gamma, training)


def batchnorm_backward(dy: Tensor, ctx: Optional[BatchNormContext]) -> Tuple[Tensor, Tensor, Tensor]:
    """ :return: (d_input, d_gamma, d_beta) """
    _require_context(ctx, "batchnorm_backward")
    if dy.shape != ctx.normalized.shape:
        raise ShapeMismatchError("batchnorm upstream gradient", ctx.normalized.shape, dy.shape)
    d_gamma = as_tensor((dy * ctx.normalized).sum(axis=(0, 2, 3)))
    d_beta = as_tensor(dy.sum(axis=(0, 2, 3)))
    d_normalized = dy * ctx.gamma[None, :, None, None]
    scale = ctx.inv_std[None, :, None, None]
    if not ctx.training:
        return as_tensor(d_normalized * scale), d_gamma, d_beta
    count = dy.shape[0] * dy.shape[2] * dy.shape[3]
    sum_d = d_normalized.sum(axis=(0, 2, 3))[None, :, None, None]
    sum_dx = (d_normalized * ctx.normalized).sum(axis=(0, 2, 3))[None, :, None, None]
    d_input = scale / count * (count * d_normalized - sum_d - ctx.normalized * sum_dx)
    return check_finite(as_tensor(d_input), "batchnorm_backward"), d_gamma, d_beta


# ----------------------------------------------------------------------------------------------------------------
# Loss

def softmax(logits: Tensor) -> Tensor:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_xent(logits: Tensor, labels: np.ndarray) -> Tuple[float, Tensor]:
    """
    Mean softmax cross-entropy over the batch.
    :param logits: (B, c)
    :param labels: (B,) integer class indices in [0, c)
    :return: loss, gradient with respect to the logits (already divided by B)
    """
    _require_rank(logits, 2, "softmax_xent logits")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise ShapeMismatchError("softmax_xent labels", (logits.shape[0],), labels.shape)
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise LabelRangeError(f"labels must lie in [0, {logits.shape[1]})")
    shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(labels.size)
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    probs = np.exp(shifted - log_norm[:, None])
    probs[rows, labels] -= 1.0
    grad = as_tensor(probs / max(labels.size, 1))
    return loss, check_finite(grad, "softmax_xent")
