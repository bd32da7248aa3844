import numpy as np
import pytest

from frprune.model.layer_spec import LayerSpec
from frprune.model.model_graph import ModelGraph
from frprune.tensor.kernels import softmax_xent
from frprune.util.errors import ArchitectureError, ShapeMismatchError, TraceMismatchError
from frprune.model.surgery import surgery_remove_channels
from frprune.model.layer_spec import ChannelRef
from tests.helpers import signed_batch, tiny_model


def test_forward_shapes_and_trace():
    model = tiny_model()
    x = signed_batch((2, 3, 8, 8))
    logits, trace = model.forward(x, capture=True)
    assert logits.shape == (2, 3)
    assert trace.model_version == model.version
    assert not trace.training
    assert set(trace.outputs) == {-1} | {spec.id for spec in model.layers}
    assert list(trace.pool_records) == [2]


def test_input_shape_is_checked():
    model = tiny_model()
    with pytest.raises(ShapeMismatchError):
        model.forward(signed_batch((2, 3, 9, 8)))


def test_graph_must_end_in_linear_and_read_backwards():
    layers = [LayerSpec(0, "relu", [-1], "relu")]
    with pytest.raises(ArchitectureError):
        ModelGraph(layers, (3, 4, 4), 2)
    layers = [LayerSpec(0, "gap", [1], "gap"), LayerSpec(1, "linear", [0], "fc", {"in_features": 3,
                                                                                  "out_features": 2})]
    with pytest.raises(ArchitectureError):
        ModelGraph(layers, (3, 4, 4), 2)


def test_backward_matches_finite_difference():
    model = tiny_model(channels=(3,), pool_after=(), bias=True)
    x = signed_batch((2, 3, 8, 8), seed=3)
    labels = np.array([0, 2])
    logits, trace = model.forward(x, capture=True)
    _, grad_logits = softmax_xent(logits, labels)
    grads = model.backward(trace, grad_logits)
    weight = model.params[0]["weight"]
    step = 1e-2
    for index in [(0, 0, 0, 0), (1, 2, 1, 1), (2, 1, 2, 0)]:
        original = weight[index]
        weight[index] = original + step
        plus, _ = softmax_xent(model.forward(x)[0], labels)
        weight[index] = original - step
        minus, _ = softmax_xent(model.forward(x)[0], labels)
        weight[index] = original
        assert np.isclose((plus - minus) / (2 * step), grads[(0, "weight")][index], rtol=5e-2, atol=1e-3)


def test_backward_refuses_stale_trace():
    model = tiny_model()
    logits, trace = model.forward(signed_batch((1, 3, 8, 8)), capture=True, training=True)
    surgery_remove_channels(model, [ChannelRef(0, 1)])
    with pytest.raises(TraceMismatchError):
        model.backward(trace, np.ones_like(logits))


def test_copy_is_independent():
    model = tiny_model()
    clone = model.copy()
    clone.params[0]["weight"][:] = 0
    assert np.any(model.params[0]["weight"] != 0)
    assert clone.version == model.version
