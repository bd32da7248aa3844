from typing import Dict, Hashable, Optional
import numpy as np

from frprune.util.errors import OptimizerStateError, ConfigError


def get_default_sgd_params() -> dict:
    return {
        "lr": 0.1,  # initial learning rate
        "momentum": 0.9,  # momentum coefficient
        "weight_decay": 5e-4,  # coupled L2 weight decay
    }


class OptimState:
    """
    SGD with momentum and coupled weight decay:
        v <- momentum * v + g + weight_decay * w
        w <- w - lr * v
    Momentum buffers are keyed like the parameters they belong to, (layer id, parameter name).
    """

    def __init__(self, params: Optional[dict] = None) -> None:
        self.lr: float = 0.1
        self.momentum: float = 0.9
        self.weight_decay: float = 5e-4

        # Created lazily as zeros on the first step of each parameter
        self.buffers: Dict[Hashable, np.ndarray] = {}

        self.update_params(params or {})

    def update_params(self, params: dict) -> None:
        for key, value in params.items():
            if key not in ("lr", "momentum", "weight_decay"):
                raise ConfigError(f"OptimState has no hyperparameter '{key}'", key=key)
            setattr(self, key, float(value))
        self.validate_params()

    def validate_params(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be a positive value", key="lr")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)", key="momentum")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0", key="weight_decay")

    def slice_buffer(self, key: Hashable, keep: np.ndarray, axis: int) -> None:
        """ Keep only the given indices of a momentum buffer along an axis (mirrors parameter surgery) """
        if key in self.buffers:
            self.buffers[key] = np.ascontiguousarray(np.take(self.buffers[key], keep, axis=axis))


def sgd_step(params: Dict[Hashable, np.ndarray], grads: Dict[Hashable, np.ndarray],
             state: OptimState) -> Dict[Hashable, np.ndarray]:
    """
    Apply one SGD step in place to every parameter that has a gradient.
    :param params: parameter tensors keyed by (layer id, name)
    :param grads: gradients with the same keys and shapes
    :param state: hyperparameters and momentum buffers
    :return: the updated params (same objects)
    """
    for key, grad in grads.items():
        weight = params[key]
        if grad.shape != weight.shape:
            raise OptimizerStateError(f"gradient for {key} has shape {grad.shape}, parameter has {weight.shape}")
        buffer = state.buffers.get(key)
        if buffer is None:
            buffer = np.zeros_like(weight)
        elif buffer.shape != weight.shape:
            raise OptimizerStateError(f"momentum buffer for {key} has shape {buffer.shape} but the parameter has "
                                      f"{weight.shape}; channel surgery did not update the optimizer state")
        direction = grad + np.float32(state.weight_decay) * weight
        buffer = np.float32(state.momentum) * buffer + direction
        state.buffers[key] = buffer
        weight -= np.float32(state.lr) * buffer
    return params
