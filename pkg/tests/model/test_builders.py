import pytest

from frprune import build_model, get_default_architecture_params
from frprune.model.builders import ArchitectureConfig
from frprune.model.layer_spec import LayerKind
from frprune.util.errors import ArchitectureError, ConfigError
from tests.helpers import tiny_arch


def test_resnet56_structure():
    model = build_model(get_default_architecture_params())
    convs = [spec for spec in model.layers if spec.kind == LayerKind.conv]
    # stem, two per block, two projection shortcuts
    assert len(convs) == 1 + 27 * 2 + 2
    eligible = sorted({ref.layer_id for ref in model.eligible_channels()})
    assert len(eligible) == 27
    assert all(model.layer(i).name.endswith(".conv1") for i in eligible)
    assert len(model.eligible_channels()) == 9 * (16 + 32 + 64)


def test_resnet_depth_must_be_representable():
    with pytest.raises(ArchitectureError):
        build_model(dict(get_default_architecture_params(), depth=57))
    with pytest.raises(ArchitectureError):
        build_model(dict(get_default_architecture_params(), family="resnet-bottleneck", depth=56))


def test_bottleneck_resnet_builds():
    model = build_model({"family": "resnet-bottleneck", "depth": 11, "input_shape": (3, 16, 16),
                         "num_classes": 4})
    assert model.layers[-1].hyper["out_features"] == 4
    # the stem feeds two convs (block conv1 and projection); conv1 and conv2 of each bottleneck are eligible
    assert len({ref.layer_id for ref in model.eligible_channels()}) == 1 + 2 * 3


def test_vgg_every_conv_is_eligible():
    model = build_model({"family": "vgg", "depth": 11, "input_shape": (3, 32, 32), "num_classes": 10,
                         "width_multiplier": 0.125})
    convs = [spec.id for spec in model.layers if spec.kind == LayerKind.conv]
    assert len(convs) == 8
    assert sorted({ref.layer_id for ref in model.eligible_channels()}) == convs


def test_plain_family():
    model = build_model(tiny_arch(channels=(4, 6), pool_after=(1,), batch_norm=True))
    kinds = [spec.kind for spec in model.layers]
    assert kinds == ["conv", "bn", "relu", "maxpool", "conv", "bn", "relu", "gap", "linear"]
    assert model.infer_shapes()[model.layers[-1].id] == (3,)


def test_same_seed_same_weights():
    a = build_model(tiny_arch(seed=5))
    b = build_model(tiny_arch(seed=5))
    c = build_model(tiny_arch(seed=6))
    assert all((a.params[i]["weight"] == b.params[i]["weight"]).all() for i in a.params if "weight" in a.params[i])
    assert not (a.params[0]["weight"] == c.params[0]["weight"]).all()


def test_unknown_parameters_are_rejected():
    with pytest.raises(ConfigError):
        ArchitectureConfig({"widht": 3})
    with pytest.raises(ArchitectureError):
        ArchitectureConfig({"family": "mobilenet"})
    with pytest.raises(ConfigError):
        ArchitectureConfig({"family": "plain", "channels": [4], "pool_after": [2]})
