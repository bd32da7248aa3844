import numpy as np
import pytest

from frprune.tensor.optim import OptimState, get_default_sgd_params, sgd_step
from frprune.util.errors import ConfigError, OptimizerStateError


def test_default_sgd_params():
    state = OptimState(get_default_sgd_params())
    assert state.lr == 0.1
    assert state.momentum == 0.9
    assert state.weight_decay == 5e-4


def test_sgd_step_with_momentum():
    weight = np.array([1.0, -2.0], dtype=np.float32)
    params = {(0, "weight"): weight}
    state = OptimState({"lr": 0.1, "momentum": 0.5, "weight_decay": 0.0})
    grads = {(0, "weight"): np.array([1.0, 1.0], dtype=np.float32)}
    sgd_step(params, grads, state)
    np.testing.assert_allclose(weight, [0.9, -2.1], rtol=1e-6)
    sgd_step(params, grads, state)
    # v = 0.5 * 1 + 1 = 1.5
    np.testing.assert_allclose(weight, [0.75, -2.25], rtol=1e-6)


def test_weight_decay_only_step_shrinks_weights():
    weight = np.array([[1.0, -3.0], [2.0, 0.5]], dtype=np.float32)
    before = float(np.linalg.norm(weight))
    state = OptimState({"lr": 0.1, "momentum": 0.9, "weight_decay": 0.01})
    sgd_step({(1, "weight"): weight}, {(1, "weight"): np.zeros_like(weight)}, state)
    assert np.linalg.norm(weight) < before


def test_stale_momentum_buffer_is_an_error():
    weight = np.ones((3, 2), dtype=np.float32)
    state = OptimState()
    state.buffers[(0, "weight")] = np.zeros((4, 2), dtype=np.float32)
    with pytest.raises(OptimizerStateError):
        sgd_step({(0, "weight"): weight}, {(0, "weight"): np.ones_like(weight)}, state)


def test_slice_buffer():
    state = OptimState()
    state.buffers[(0, "weight")] = np.arange(6, dtype=np.float32).reshape(3, 2)
    state.slice_buffer((0, "weight"), np.array([0, 2]), axis=0)
    np.testing.assert_array_equal(state.buffers[(0, "weight")], [[0, 1], [4, 5]])


def test_invalid_hyperparameters():
    with pytest.raises(ConfigError):
        OptimState({"momentum": 1.0})
    with pytest.raises(ConfigError):
        OptimState({"nesterov": True})
