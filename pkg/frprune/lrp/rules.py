"""
Local relevance redistribution rules.  Every rule maps the relevance of a layer's output onto its input(s);
all of them work on a leading batch dimension, one independent relevance distribution per sample.
"""
from typing import Callable, Dict, Optional, Tuple
import numpy as np

from frprune.lrp.lrp_config import LrpConfig, PoolRule
from frprune.tensor import kernels
from frprune.tensor.kernels import Tensor, DTYPE
from frprune.util.errors import LabelRangeError, ShapeMismatchError, MissingContextError
from frprune.util.flop_meter import FlopMeter

RELEVANCE = "relevance"


def init_output_relevance(label: int, c: int) -> Tensor:
    """
    Kronecker delta on the true class: 1 at `label`, 0 elsewhere.
    :param label: class index in [0, c)
    :param c: number of classes
    """
    if not 0 <= int(label) < c:
        raise LabelRangeError(f"label {label} outside [0, {c})")
    relevance = np.zeros(c, dtype=DTYPE)
    relevance[int(label)] = 1.0
    return relevance


def init_output_relevance_batch(labels: np.ndarray, c: int) -> Tensor:
    """ One delta row per sample, (B, c) """
    return np.stack([init_output_relevance(label, c) for label in np.asarray(labels).reshape(-1)])


def safe_divide(numerator: Tensor, denominator: Tensor, epsilon: float) -> Tensor:
    """ numerator / denominator, with 0 wherever |denominator| < epsilon """
    out = np.zeros(np.broadcast(numerator, denominator).shape, dtype=DTYPE)
    mask = np.abs(denominator) >= epsilon
    np.divide(numerator, denominator, out=out, where=mask)
    return out


def _affine_ops(a: Tensor, w: Tensor, stride: int, padding: int) -> Tuple[Callable, Callable, int]:
    """ forward z = a*w, transposed spread s -> inputs, and MACs of one such call for the whole batch """
    if w.ndim == 2:
        if a.ndim != 2 or a.shape[1] != w.shape[1]:
            raise ShapeMismatchError("affine relevance input features", (w.shape[1],), a.shape[1:])
        return (lambda x, weight: x @ weight.T), (lambda s, weight: s @ weight), a.shape[0] * w.size
    if a.ndim != 4 or a.shape[1] != w.shape[1]:
        raise ShapeMismatchError("conv relevance input channels", (w.shape[1],), a.shape[1:2])
    h_out = kernels.conv2d_output_size(a.shape[2], w.shape[2], stride, padding)
    w_out = kernels.conv2d_output_size(a.shape[3], w.shape[3], stride, padding)

    def forward(x: Tensor, weight: Tensor) -> Tensor:
        return kernels.conv2d_forward(x, weight, None, stride, padding)[0]

    def spread(s: Tensor, weight: Tensor) -> Tensor:
        return kernels.conv2d_input_grad(s, weight, a.shape, stride, padding)

    return forward, spread, a.shape[0] * w.size * h_out * w_out


def relevance_backward_affine(a: Tensor, w: Tensor, bias: Optional[Tensor], upstream: Tensor, cfg: LrpConfig,
                              stride: int = 1, padding: int = 0, meter: Optional[FlopMeter] = None) -> Tensor:
    """
    Alpha-beta rule through a linear (w: (out, in)) or conv (w: (Cout, Cin, Kh, Kw)) layer:

        R_p = sum_q ( alpha * (a_p w_pq)^+ / sum_p (a_p w_pq)^+  -  beta * (a_p w_pq)^- / sum_p (a_p w_pq)^- ) R_q

    Products are split by the sign of a_p * w_pq, so signed inputs (e.g. normalised images) are handled.
    The bias takes no share of the relevance.
    :param a: input activations (B, in) or (B, Cin, H, W)
    :param w: weights
    :param bias: ignored, kept for a uniform signature
    :param upstream: output relevance (B, out) or (B, Cout, Hout, Wout)
    :param cfg: rule settings
    :return: input relevance, same shape as a
    """
    forward, spread, macs = _affine_ops(a, w, stride, padding)
    a_pos = np.maximum(a, 0).astype(DTYPE)
    a_neg = np.minimum(a, 0).astype(DTYPE)
    w_pos = np.maximum(w, 0).astype(DTYPE)
    w_neg = np.minimum(w, 0).astype(DTYPE)
    signed = bool(np.any(a_neg < 0))
    calls = 0

    z_pos = forward(a_pos, w_pos)
    calls += 1
    if signed:
        z_pos = z_pos + forward(a_neg, w_neg)
        calls += 1
    if z_pos.shape != upstream.shape:
        raise ShapeMismatchError("upstream relevance", z_pos.shape, upstream.shape)
    s_pos = safe_divide(cfg.alpha * upstream, z_pos, cfg.epsilon)
    relevance = a_pos * spread(s_pos, w_pos)
    calls += 1
    if signed:
        relevance += a_neg * spread(s_pos, w_neg)
        calls += 1

    if cfg.beta != 0:
        z_neg = forward(a_pos, w_neg)
        calls += 1
        if signed:
            z_neg = z_neg + forward(a_neg, w_pos)
            calls += 1
        s_neg = safe_divide(cfg.beta * upstream, z_neg, cfg.epsilon)
        relevance -= a_pos * spread(s_neg, w_neg)
        calls += 1
        if signed:
            relevance -= a_neg * spread(s_neg, w_pos)
            calls += 1

    if meter is not None:
        meter.add(RELEVANCE, calls * macs)
    return relevance.astype(DTYPE)


def relevance_through_relu(relevance: Tensor) -> Tensor:
    """ The rectifier is absorbed into the next affine step, relevance passes unchanged """
    return relevance


def relevance_through_maxpool(upstream: Tensor, record: Optional[kernels.MaxPoolContext], cfg: LrpConfig,
                              activations: Optional[Tensor] = None, meter: Optional[FlopMeter] = None) -> Tensor:
    """
    Winner-take-all: each pooled relevance goes to the recorded argmax position of its window.
    Proportional: it is shared within the window in proportion to the input activations.
    """
    if record is None:
        raise MissingContextError("relevance_through_maxpool needs the argmax records of the forward pass")
    if meter is not None:
        meter.add(RELEVANCE, int(np.prod(record.input_shape)))
    if cfg.pool_rule == PoolRule.winner_take_all:
        return kernels.maxpool2_scatter(upstream, record)
    if activations is None:
        raise MissingContextError("proportional pooling relevance needs the pooled input activations")
    batch, channels, height, width = activations.shape
    h_out, w_out = height // 2, width // 2
    windows = activations[:, :, :2 * h_out, :2 * w_out].reshape(batch, channels, h_out, 2, w_out, 2)
    totals = windows.sum(axis=(3, 5))
    shares = safe_divide(windows, totals[:, :, :, None, :, None], cfg.epsilon)
    degenerate = (np.abs(totals) < cfg.epsilon)[:, :, :, None, :, None]
    shares = np.where(degenerate, np.float32(0.25), shares)
    out = np.zeros(activations.shape, dtype=DTYPE)
    out[:, :, :2 * h_out, :2 * w_out] = (shares * upstream[:, :, :, None, :, None]).reshape(
        batch, channels, 2 * h_out, 2 * w_out)
    return out


def relevance_through_gap(upstream: Tensor, activations: Tensor, cfg: LrpConfig,
                          meter: Optional[FlopMeter] = None) -> Tensor:
    """
    Global average pooling is a positive linear map, relevance of channel j is spread over its positions in
    proportion to their activations (uniformly when they sum to zero).
    """
    if upstream.shape != activations.shape[:2]:
        raise ShapeMismatchError("gap relevance", activations.shape[:2], upstream.shape)
    if meter is not None:
        meter.add(RELEVANCE, activations.size)
    totals = activations.sum(axis=(2, 3), keepdims=True)
    shares = safe_divide(activations, totals, cfg.epsilon)
    uniform = np.float32(1.0 / (activations.shape[2] * activations.shape[3]))
    shares = np.where(np.abs(totals) < cfg.epsilon, uniform, shares)
    return (shares * upstream[:, :, None, None]).astype(DTYPE)


def fold_batchnorm(weight: Tensor, bias: Optional[Tensor], bn_params: Dict[str, Tensor],
                   bn_buffers: Dict[str, Tensor], eps: float = 1e-5) -> Tuple[Tensor, Tensor]:
    """
    Fold an eval-mode batch-norm into the conv that feeds it:
        w' = w * gamma / sqrt(var + eps),  b' = (b - mean) * gamma / sqrt(var + eps) + beta
    """
    scale = bn_params["gamma"] / np.sqrt(bn_buffers["running_var"] + eps)
    if weight.shape[0] != scale.shape[0]:
        raise ShapeMismatchError("batch-norm fold channels", (weight.shape[0],), scale.shape)
    conv_bias = bias if bias is not None else np.zeros(weight.shape[0], dtype=DTYPE)
    folded_weight = (weight * scale[:, None, None, None]).astype(DTYPE)
    folded_bias = ((conv_bias - bn_buffers["running_mean"]) * scale + bn_params["beta"]).astype(DTYPE)
    return folded_weight, folded_bias


def relevance_through_bn(upstream: Tensor, bn_params: Dict[str, Tensor], bn_buffers: Dict[str, Tensor],
                         conv_input: Tensor, conv_weight: Tensor, conv_bias: Optional[Tensor], cfg: LrpConfig,
                         stride: int = 1, padding: int = 0, meter: Optional[FlopMeter] = None) -> Tensor:
    """
    Relevance through a conv + batch-norm pair: the batch-norm is folded into the conv weights and the
    alpha-beta rule is applied once to the folded conv, there is no separate batch-norm step.
    :return: relevance of the conv input
    """
    folded_weight, folded_bias = fold_batchnorm(conv_weight, conv_bias, bn_params, bn_buffers)
    return relevance_backward_affine(conv_input, folded_weight, folded_bias, upstream, cfg, stride, padding, meter)


def relevance_through_add(upstream: Tensor, branch_a: Tensor, branch_b: Tensor, cfg: LrpConfig,
                          meter: Optional[FlopMeter] = None) -> Tuple[Tensor, Tensor]:
    """
    Split the relevance of a sum between its two operands in proportion a_i / (a_1 + a_2) per position,
    50/50 where the sum is (near) zero.  The two parts always add up to the upstream relevance.
    """
    if branch_a.shape != branch_b.shape or branch_a.shape != upstream.shape:
        raise ShapeMismatchError("add relevance operands", upstream.shape, branch_a.shape)
    if meter is not None:
        meter.add(RELEVANCE, upstream.size)
    totals = branch_a + branch_b
    share_a = safe_divide(branch_a, totals, cfg.epsilon)
    share_a = np.where(np.abs(totals) < cfg.epsilon, np.float32(0.5), share_a)
    relevance_a = (share_a * upstream).astype(DTYPE)
    return relevance_a, (upstream - relevance_a).astype(DTYPE)
