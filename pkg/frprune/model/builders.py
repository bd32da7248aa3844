from typing import Dict, List, Optional, Tuple, Union
import numpy as np

from frprune.model.layer_spec import LayerSpec, LayerKind, MODEL_INPUT, param_shapes, buffer_shapes
from frprune.model.model_graph import ModelGraph
from frprune.util.errors import ArchitectureError, ConfigError


class Family:
    """ Supported architecture families """
    plain = "plain"
    vgg = "vgg"
    resnet = "resnet"
    resnet_bottleneck = "resnet-bottleneck"

    @staticmethod
    def to_list():
        return [Family.plain, Family.vgg, Family.resnet, Family.resnet_bottleneck]


VGG_CONFIGS = {
    11: [64, "M", 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"],
    13: [64, 64, "M", 128, 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"],
    16: [64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M"],
    19: [64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M", 512, 512, 512, 512, "M", 512, 512, 512, 512, "M"],
}

RESNET_STAGE_WIDTHS = (16, 32, 64)
BOTTLENECK_EXPANSION = 4


def get_default_architecture_params() -> dict:
    return {
        "family": Family.resnet,  # plain | vgg | resnet | resnet-bottleneck
        "depth": 56,  # total weighted layers (resnet: 6m+2, resnet-bottleneck: 9m+2, vgg: 11/13/16/19)
        "input_shape": (3, 32, 32),  # (C, H, W)
        "num_classes": 10,
        "seed": 0,  # initialisation seed
    }


class ArchitectureConfig:
    """
    Description of a network to build.  For the `plain` family the layer stack comes from `channels`
    (one conv per entry) and `pool_after` (1-based conv positions followed by a 2x2 max pool).
    """

    def __init__(self, params: Optional[dict] = None) -> None:
        self.family: str = Family.resnet
        self.depth: Optional[int] = 56
        self.input_shape: Tuple[int, ...] = (3, 32, 32)
        self.num_classes: int = 10
        self.seed: int = 0

        # plain family only
        self.channels: List[int] = []
        self.pool_after: List[int] = []
        self.kernel_size: int = 3
        self.batch_norm: bool = False
        self.bias: bool = True

        # vgg family only
        self.width_multiplier: float = 1.0

        self.update_params(params or {})

    def update_params(self, params: dict) -> None:
        """
        Update parameters
        :param params: dictionary of <parameter_name>, <parameter_value> pairs
        """
        for key, value in params.items():
            if not hasattr(self, key):
                raise ConfigError(f"ArchitectureConfig does not have an attribute '{key}'", key=key,
                                  section="architecture")
            setattr(self, key, value)
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.channels = [int(c) for c in self.channels]
        self.pool_after = [int(p) for p in self.pool_after]
        self.validate_params()

    def validate_params(self) -> None:
        if self.family not in Family.to_list():
            raise ArchitectureError(f"Unknown architecture family '{self.family}', expected one of "
                                    f"{Family.to_list()}")
        if len(self.input_shape) != 3 or min(self.input_shape) <= 0:
            raise ConfigError("input_shape must be three positive sizes (C, H, W)", key="input_shape",
                              section="architecture")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be at least 1", key="num_classes", section="architecture")
        if self.family == Family.plain:
            if len(self.channels) == 0 or min(self.channels) < 1:
                raise ConfigError("plain architectures need a non-empty list of positive channel counts",
                                  key="channels", section="architecture")
            if any(p < 1 or p > len(self.channels) for p in self.pool_after):
                raise ConfigError("pool_after entries must be conv positions 1..len(channels)", key="pool_after",
                                  section="architecture")
        elif self.family == Family.vgg:
            if self.depth not in VGG_CONFIGS:
                raise ArchitectureError(f"VGG depth must be one of {sorted(VGG_CONFIGS)}, got {self.depth}")
        elif self.family == Family.resnet:
            if self.depth is None or self.depth < 8 or (self.depth - 2) % 6 != 0:
                raise ArchitectureError(f"ResNet depth must be 6m+2 (m >= 1) for the CIFAR family, got {self.depth}")
        elif self.family == Family.resnet_bottleneck:
            if self.depth is None or self.depth < 11 or (self.depth - 2) % 9 != 0:
                raise ArchitectureError(f"Bottleneck ResNet depth must be 9m+2 (m >= 1), got {self.depth}")

    def to_json(self) -> dict:
        return {key: (list(value) if isinstance(value, (list, tuple)) else value)
                for key, value in self.__dict__.items()}

    @staticmethod
    def from_json(json_data: dict) -> "ArchitectureConfig":
        return ArchitectureConfig(json_data)


class _GraphBuilder:
    """ Appends layers one at a time while tracking the current channel count """

    def __init__(self, input_channels: int) -> None:
        self.layers: List[LayerSpec] = []
        self.channels = input_channels

    def _append(self, kind: str, inputs: List[int], name: str, hyper: Optional[dict] = None) -> int:
        layer_id = len(self.layers)
        self.layers.append(LayerSpec(layer_id, kind, inputs, name, hyper or {}))
        return layer_id

    def conv(self, src: int, in_channels: int, out_channels: int, name: str, kernel_size: int = 3,
             stride: int = 1, bias: bool = False) -> int:
        self.channels = out_channels
        return self._append(LayerKind.conv, [src], name, {
            "in_channels": in_channels, "out_channels": out_channels, "kernel_size": kernel_size,
            "stride": stride, "padding": kernel_size // 2, "bias": bias})

    def bn(self, src: int, channels: int, name: str) -> int:
        return self._append(LayerKind.bn, [src], name, {"channels": channels})

    def relu(self, src: int, name: str) -> int:
        return self._append(LayerKind.relu, [src], name)

    def maxpool(self, src: int, name: str) -> int:
        return self._append(LayerKind.maxpool, [src], name)

    def gap(self, src: int, name: str) -> int:
        return self._append(LayerKind.gap, [src], name)

    def linear(self, src: int, in_features: int, out_features: int, name: str) -> int:
        return self._append(LayerKind.linear, [src], name, {
            "in_features": in_features, "out_features": out_features, "bias": True})

    def add(self, a: int, b: int, name: str) -> int:
        return self._append(LayerKind.add, [a, b], name)


def _build_plain(config: ArchitectureConfig, builder: _GraphBuilder) -> Tuple[int, int]:
    src, channels = MODEL_INPUT, config.input_shape[0]
    for position, width in enumerate(config.channels, start=1):
        src = builder.conv(src, channels, width, f"conv{position}", kernel_size=config.kernel_size,
                           bias=config.bias)
        if config.batch_norm:
            src = builder.bn(src, width, f"bn{position}")
        src = builder.relu(src, f"relu{position}")
        if position in config.pool_after:
            src = builder.maxpool(src, f"pool{position}")
        channels = width
    return src, channels


def _build_vgg(config: ArchitectureConfig, builder: _GraphBuilder) -> Tuple[int, int]:
    src, channels, position = MODEL_INPUT, config.input_shape[0], 0
    for entry in VGG_CONFIGS[config.depth]:
        if entry == "M":
            src = builder.maxpool(src, f"pool{position}")
            continue
        position += 1
        width = max(1, int(round(entry * config.width_multiplier)))
        src = builder.conv(src, channels, width, f"conv{position}")
        src = builder.bn(src, width, f"bn{position}")
        src = builder.relu(src, f"relu{position}")
        channels = width
    return src, channels


def _basic_block(builder: _GraphBuilder, src: int, in_channels: int, width: int, stride: int, name: str) -> int:
    out = builder.conv(src, in_channels, width, f"{name}.conv1", stride=stride)
    out = builder.bn(out, width, f"{name}.bn1")
    out = builder.relu(out, f"{name}.relu1")
    out = builder.conv(out, width, width, f"{name}.conv2")
    out = builder.bn(out, width, f"{name}.bn2")
    shortcut = src
    if stride != 1 or in_channels != width:
        shortcut = builder.conv(src, in_channels, width, f"{name}.shortcut", kernel_size=1, stride=stride)
        shortcut = builder.bn(shortcut, width, f"{name}.shortcut_bn")
    out = builder.add(out, shortcut, f"{name}.add")
    return builder.relu(out, f"{name}.relu2")


def _bottleneck_block(builder: _GraphBuilder, src: int, in_channels: int, planes: int, stride: int,
                      name: str) -> int:
    width = planes * BOTTLENECK_EXPANSION
    out = builder.conv(src, in_channels, planes, f"{name}.conv1", kernel_size=1)
    out = builder.bn(out, planes, f"{name}.bn1")
    out = builder.relu(out, f"{name}.relu1")
    out = builder.conv(out, planes, planes, f"{name}.conv2", stride=stride)
    out = builder.bn(out, planes, f"{name}.bn2")
    out = builder.relu(out, f"{name}.relu2")
    out = builder.conv(out, planes, width, f"{name}.conv3", kernel_size=1)
    out = builder.bn(out, width, f"{name}.bn3")
    shortcut = src
    if stride != 1 or in_channels != width:
        shortcut = builder.conv(src, in_channels, width, f"{name}.shortcut", kernel_size=1, stride=stride)
        shortcut = builder.bn(shortcut, width, f"{name}.shortcut_bn")
    out = builder.add(out, shortcut, f"{name}.add")
    return builder.relu(out, f"{name}.relu3")


def _build_resnet(config: ArchitectureConfig, builder: _GraphBuilder) -> Tuple[int, int]:
    bottleneck = config.family == Family.resnet_bottleneck
    blocks_per_stage = (config.depth - 2) // (9 if bottleneck else 6)
    src = builder.conv(MODEL_INPUT, config.input_shape[0], RESNET_STAGE_WIDTHS[0], "conv1")
    src = builder.bn(src, RESNET_STAGE_WIDTHS[0], "bn1")
    src = builder.relu(src, "relu1")
    channels = RESNET_STAGE_WIDTHS[0]
    for stage, width in enumerate(RESNET_STAGE_WIDTHS, start=1):
        for block in range(blocks_per_stage):
            stride = 2 if stage > 1 and block == 0 else 1
            name = f"layer{stage}.{block}"
            if bottleneck:
                src = _bottleneck_block(builder, src, channels, width, stride, name)
                channels = width * BOTTLENECK_EXPANSION
            else:
                src = _basic_block(builder, src, channels, width, stride, name)
                channels = width
    return src, channels


def initialise_parameters(layers: List[LayerSpec], seed: int) -> Tuple[Dict[int, dict], Dict[int, dict]]:
    """
    He fan-in normal initialisation of conv and linear weights, zero biases, unit batch-norm scale.
    Tensors are drawn in layer order from one generator, so a seed fixes the whole model.
    """
    rng = np.random.default_rng(seed)
    params: Dict[int, dict] = {}
    buffers: Dict[int, dict] = {}
    for spec in layers:
        shapes = param_shapes(spec)
        if not shapes:
            continue
        params[spec.id] = {}
        if spec.kind in (LayerKind.conv, LayerKind.linear):
            weight_shape = shapes["weight"]
            fan_in = int(np.prod(weight_shape[1:]))
            params[spec.id]["weight"] = (rng.standard_normal(weight_shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)
            if "bias" in shapes:
                params[spec.id]["bias"] = np.zeros(shapes["bias"], dtype=np.float32)
        elif spec.kind == LayerKind.bn:
            params[spec.id]["gamma"] = np.ones(shapes["gamma"], dtype=np.float32)
            params[spec.id]["beta"] = np.zeros(shapes["beta"], dtype=np.float32)
            buffers[spec.id] = {"running_mean": np.zeros(buffer_shapes(spec)["running_mean"], dtype=np.float32),
                                "running_var": np.ones(buffer_shapes(spec)["running_var"], dtype=np.float32)}
    return params, buffers


def build_model(arch_config: Union[ArchitectureConfig, dict]) -> ModelGraph:
    """
    Build and initialise a model.
    :param arch_config: ArchitectureConfig, or a dict of its parameters
    :return: validated ModelGraph ending in global average pooling and one linear classifier
    """
    config = arch_config if isinstance(arch_config, ArchitectureConfig) else ArchitectureConfig(arch_config)
    builder = _GraphBuilder(config.input_shape[0])
    if config.family == Family.plain:
        src, channels = _build_plain(config, builder)
    elif config.family == Family.vgg:
        src, channels = _build_vgg(config, builder)
    else:
        src, channels = _build_resnet(config, builder)
    src = builder.gap(src, "gap")
    builder.linear(src, channels, config.num_classes, "fc")
    params, buffers = initialise_parameters(builder.layers, config.seed)
    return ModelGraph(builder.layers, config.input_shape, config.num_classes, params, buffers, config.to_json())
