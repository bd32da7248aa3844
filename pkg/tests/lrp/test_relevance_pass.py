import numpy as np
import pytest

from frprune.lrp.lrp_config import LrpConfig
from frprune.lrp.relevance_pass import foldable_bn, full_relevance_pass, input_may_be_signed
from frprune.metrics.effort import relevance_sweep_flops
from frprune.model.builders import build_model
from frprune.model.layer_spec import ChannelRef, LayerKind, MODEL_INPUT
from frprune.model.surgery import surgery_remove_channels
from frprune.tensor import kernels
from frprune.util.errors import TraceMismatchError
from frprune.util.flop_meter import FlopMeter
from tests.helpers import signed_batch, tiny_arch, tiny_model


def _split_products(a, w, spec):
    """ (z+, z-) of an affine layer, sign-split over the products a_p * w_pq """
    def apply(x, weight):
        if spec.kind == LayerKind.linear:
            return x @ weight.T
        return kernels.conv2d_forward(x, weight, None, spec.hyper["stride"], spec.hyper["padding"])[0]

    a_pos, a_neg = np.maximum(a, 0), np.minimum(a, 0)
    w_pos, w_neg = np.maximum(w, 0), np.minimum(w, 0)
    return apply(a_pos, w_pos) + apply(a_neg, w_neg), apply(a_pos, w_neg) + apply(a_neg, w_pos)


def clamped_samples(model, trace, relevance, cfg):
    """ Samples for which some affine layer received relevance where a rule denominator was clamped to zero """
    bad = np.zeros(trace.inputs.shape[0], dtype=bool)
    for spec in model.layers:
        if spec.kind not in (LayerKind.conv, LayerKind.linear):
            continue
        z_pos, z_neg = _split_products(trace.outputs[spec.inputs[0]], model.params[spec.id]["weight"], spec)
        small = np.abs(z_pos) < cfg.epsilon
        if cfg.beta != 0:
            small |= np.abs(z_neg) < cfg.epsilon
        hit = (relevance.outputs[spec.id] != 0) & small
        bad |= hit.reshape(hit.shape[0], -1).any(axis=1)
    return bad


@pytest.mark.parametrize("alpha,beta", [(2.0, 1.0), (1.0, 0.0)])
def test_relevance_is_conserved_on_random_bias_free_networks(alpha, beta):
    cfg = LrpConfig({"alpha": alpha, "beta": beta})
    rng = np.random.default_rng(11)
    checked = 0
    for trial in range(25):
        depth = int(rng.integers(2, 5))
        channels = [int(c) for c in rng.integers(4, 9, size=depth)]
        pool_after = sorted({int(p) for p in rng.integers(1, depth + 1, size=int(rng.integers(0, 3)))})
        model = build_model(tiny_arch(channels=channels, pool_after=pool_after, bias=False,
                                      num_classes=int(rng.integers(2, 6)), seed=trial))
        x = signed_batch((16, 3, 8, 8), seed=100 + trial)
        labels = rng.integers(0, model.num_classes, size=16)
        _, trace = model.forward(x, capture=True)
        relevance = full_relevance_pass(model, trace, labels, cfg)
        keep = ~clamped_samples(model, trace, relevance, cfg)
        checked += int(keep.sum())
        for layer_id in [MODEL_INPUT] + [spec.id for spec in model.layers]:
            np.testing.assert_allclose(relevance.totals(layer_id)[keep], 1.0, rtol=1e-4)
    assert checked >= 25 * 16 // 2


def test_bn_is_folded_into_its_conv():
    model = tiny_model(channels=(4, 5), batch_norm=True)
    assert foldable_bn(model, 1) == 0
    x = signed_batch((4, 3, 8, 8))
    _, trace = model.forward(x, capture=True)
    folded = full_relevance_pass(model, trace, np.array([0, 1, 2, 0]))
    identity = full_relevance_pass(model, trace, np.array([0, 1, 2, 0]), LrpConfig({"bn_handling": "identity"}))
    # relevance above the last bn is shared, below a folded pair it differs
    np.testing.assert_allclose(folded[5], identity[5])
    assert not np.allclose(folded[MODEL_INPUT], identity[MODEL_INPUT])


def test_stale_or_training_trace_is_rejected():
    model = tiny_model()
    x = signed_batch((2, 3, 8, 8))
    _, training_trace = model.forward(x, capture=True, training=True)
    with pytest.raises(TraceMismatchError):
        full_relevance_pass(model, training_trace, np.array([0, 1]))
    _, trace = model.forward(x, capture=True)
    with pytest.raises(TraceMismatchError):
        full_relevance_pass(model, trace, np.array([0]))
    surgery_remove_channels(model, [ChannelRef(0, 0)])
    with pytest.raises(TraceMismatchError):
        full_relevance_pass(model, trace, np.array([0, 1]))


def test_batch_pass_equals_single_sample_passes():
    model = tiny_model(channels=(4, 6), batch_norm=True)
    x = signed_batch((3, 3, 8, 8), seed=4)
    labels = np.array([2, 0, 1])
    _, trace = model.forward(x, capture=True)
    batch = full_relevance_pass(model, trace, labels)
    for i in range(3):
        _, single_trace = model.forward(x[i:i + 1], capture=True)
        single = full_relevance_pass(model, single_trace, int(labels[i]))
        np.testing.assert_allclose(single.channel_relevance(0)[0], batch.channel_relevance(0)[i], rtol=1e-4,
                                   atol=1e-6)


def test_residual_network_relevance_reaches_the_input():
    model = build_model({"family": "resnet", "depth": 8, "input_shape": (3, 8, 8), "num_classes": 2})
    x = signed_batch((2, 3, 8, 8))
    _, trace = model.forward(x, capture=True)
    relevance = full_relevance_pass(model, trace, np.array([0, 1]))
    assert relevance[MODEL_INPUT].shape == x.shape
    for ref_layer in {ref.layer_id for ref in model.eligible_channels()}:
        assert relevance.channel_relevance(ref_layer).shape == (2, model.channel_count(ref_layer))


def test_metered_sweep_uses_signed_products_only_at_the_input():
    model = tiny_model(channels=(4, 6), pool_after=(1,))
    assert input_may_be_signed(model, 0)
    assert not input_may_be_signed(model, 3)
    assert not input_may_be_signed(model, model.layers[-1].id)
    x = signed_batch((2, 3, 8, 8))
    _, trace = model.forward(x, capture=True)
    meter = FlopMeter()
    full_relevance_pass(model, trace, np.array([0, 1]), meter=meter)
    assert meter["relevance"] == 2 * relevance_sweep_flops(model)


def test_beta_changes_relevance_of_a_network_with_negative_weights():
    model = tiny_model(channels=(4, 6))
    assert (model.params[0]["weight"] < 0).any() and (model.params[3]["weight"] < 0).any()
    x = signed_batch((8, 3, 8, 8), seed=5)
    labels = np.arange(8) % model.num_classes
    _, trace = model.forward(x, capture=True)
    alpha_beta = full_relevance_pass(model, trace, labels, LrpConfig({"alpha": 2.0, "beta": 1.0}))
    alpha_one = full_relevance_pass(model, trace, labels, LrpConfig({"alpha": 1.0, "beta": 0.0}))
    for layer_id in (0, 3):
        assert not np.allclose(alpha_beta.channel_relevance(layer_id), alpha_one.channel_relevance(layer_id))
    assert not np.allclose(alpha_beta[MODEL_INPUT], alpha_one[MODEL_INPUT])
