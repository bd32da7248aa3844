import numpy as np
import pytest

from frprune import build_model, cost_report, get_default_architecture_params
from frprune.metrics.cost import cost_drop, count_flops, count_params
from frprune.model.layer_spec import ChannelRef, LayerKind, param_shapes
from frprune.model.surgery import surgery_remove_channels
from tests.helpers import tiny_arch, tiny_model


def test_conv_params_closed_form():
    model = tiny_model(channels=(8,), pool_after=(), bias=True)
    report = cost_report(model)
    assert int(report.layers.loc[0, "params"]) == 3 * 8 * 9 + 8


def test_one_by_one_conv_flops():
    model = build_model(dict(tiny_arch(channels=(1,), pool_after=(), input_shape=(1, 4, 4), num_classes=2),
                             kernel_size=1))
    assert int(cost_report(model).layers.loc[0, "flops"]) == 16


def test_resnet56_matches_published_cost():
    model = build_model(get_default_architecture_params())
    report = cost_report(model)
    assert report.total_params == pytest.approx(0.86e6, rel=0.02)
    assert report.total_flops == pytest.approx(0.13e9, rel=0.05)


def test_totals_are_the_layer_sums():
    report = cost_report(tiny_model(channels=(4, 6), batch_norm=True))
    assert report.total_params == report.layers["params"].sum()
    assert report.total_flops == report.layers["flops"].sum()
    assert report.to_dict() == {"params": report.total_params, "flops": report.total_flops}


def brute_force_counts(model):
    """ Enumerate every scalar and every multiply-accumulate of one sample """
    params = sum(tensor.size for tensor in model.parameters().values())
    shapes = model.infer_shapes()
    macs = 0
    for spec in model.layers:
        if spec.kind == LayerKind.conv:
            c_out, h_out, w_out = shapes[spec.id]
            k = spec.hyper["kernel_size"]
            for _ in range(c_out * h_out * w_out):
                macs += spec.hyper["in_channels"] * k * k
        elif spec.kind == LayerKind.linear:
            macs += spec.hyper["in_features"] * spec.hyper["out_features"]
        elif spec.kind in (LayerKind.bn, LayerKind.relu, LayerKind.add):
            macs += int(np.prod(shapes[spec.id]))
        else:
            macs += int(np.prod(shapes[spec.inputs[0]]))
    return params, macs


def test_counters_agree_with_brute_force_on_random_architectures():
    rng = np.random.default_rng(14)
    for trial in range(50):
        depth = int(rng.integers(1, 4))
        channels = [int(c) for c in rng.integers(1, 6, size=depth)]
        pool_after = sorted({int(p) for p in rng.integers(1, depth + 1, size=int(rng.integers(0, 2)))})
        model = build_model(tiny_arch(channels=channels, pool_after=pool_after, batch_norm=bool(rng.integers(2)),
                                      bias=bool(rng.integers(2)), input_shape=(2, 6, 6), seed=trial))
        assert (count_params(model), count_flops(model)) == brute_force_counts(model)


def test_counts_do_not_depend_on_weight_values():
    model = tiny_model()
    before = (count_params(model), count_flops(model))
    for tensors in model.params.values():
        for tensor in tensors.values():
            tensor[...] = 7.0
    assert (count_params(model), count_flops(model)) == before


def test_halving_a_conv_halves_its_own_and_the_next_flops():
    model = tiny_model(channels=(8, 8), pool_after=())
    before = cost_report(model).layers.set_index("layer_id")["flops"]
    surgery_remove_channels(model, [ChannelRef(0, c) for c in range(4)])
    after = cost_report(model).layers.set_index("layer_id")["flops"]
    assert after[0] * 2 == before[0]
    assert after[2] * 2 == before[2]


def test_cost_drop():
    baseline = cost_report(tiny_model(channels=(8, 8)))
    model = tiny_model(channels=(8, 8))
    surgery_remove_channels(model, [ChannelRef(0, 0), ChannelRef(0, 1)])
    pruned = cost_report(model)
    drops = cost_drop(baseline, pruned)
    assert drops["params_drop_percent"] == pytest.approx(
        100 * (1 - pruned.total_params / baseline.total_params), abs=0.01)
    assert drops["flops_drop_percent"] > 0
