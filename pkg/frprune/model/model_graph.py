from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from frprune.model.layer_spec import (LayerSpec, LayerKind, ChannelRef, MODEL_INPUT, CHANNELWISE_KINDS,
                                      param_shapes, buffer_shapes, output_shape, layer_flops)
from frprune.tensor import kernels
from frprune.tensor.kernels import Tensor, as_tensor
from frprune.util.errors import ArchitectureError, ShapeMismatchError, TraceMismatchError
from frprune.util.flop_meter import FlopMeter

ParamKey = Tuple[int, str]


@dataclass
class ChannelDependency:
    """
    Everything that is indexed by the output channels of one conv layer.
    bn_ids: batch-norm layers whose per-channel entries follow the conv's channels
    consumers: (layer id, kind) of convs/linears whose input slice j is fed by channel j
    feeds_add: True when a channel reaches an add junction (removing it would break the junction)
    """
    producer: int
    bn_ids: List[int] = field(default_factory=list)
    passthrough_ids: List[int] = field(default_factory=list)
    consumers: List[Tuple[int, str]] = field(default_factory=list)
    feeds_add: bool = False


@dataclass
class ActivationTrace:
    """
    Per-layer outputs of one forward pass, plus what the backward passes need: maxpool argmax records
    and the kernel contexts.  `model_version` ties the trace to the model state it was taken from.
    """
    inputs: Tensor
    outputs: Dict[int, Tensor]
    pool_records: Dict[int, kernels.MaxPoolContext]
    contexts: Dict[int, Any]
    model_version: int
    training: bool


class ModelGraph:
    """
    An ordered list of layers forming a DAG (inputs always refer to earlier layers or the model input),
    the parameter tensors of every layer, and the channel-dependency edges derived from the topology.
    """

    def __init__(self, layers: List[LayerSpec], input_shape: Tuple[int, ...], num_classes: int,
                 params: Optional[Dict[int, Dict[str, Tensor]]] = None,
                 buffers: Optional[Dict[int, Dict[str, Tensor]]] = None,
                 arch: Optional[dict] = None) -> None:
        self.layers: List[LayerSpec] = layers
        self.input_shape: Tuple[int, ...] = tuple(int(s) for s in input_shape)
        self.num_classes: int = int(num_classes)
        self.params: Dict[int, Dict[str, Tensor]] = params if params is not None else {}
        self.buffers: Dict[int, Dict[str, Tensor]] = buffers if buffers is not None else {}
        # Echo of the architecture config the model was built from
        self.arch: dict = dict(arch or {})

        # Bumped by every surgery, so stale traces are detected
        self.version: int = 0

        self.edges: Dict[int, ChannelDependency] = {}
        self.validate()
        self.refresh()

    # ------------------------------------------------------------------------------------------------------------
    # Structure

    def layer(self, layer_id: int) -> LayerSpec:
        return self.layers[layer_id]

    def consumers_of(self, layer_id: int) -> List[int]:
        return [spec.id for spec in self.layers if layer_id in spec.inputs]

    def validate(self) -> None:
        """ Check ids, DAG ordering, the single linear output, add junction arity and all shapes """
        if len(self.layers) == 0:
            raise ArchitectureError("A model needs at least one layer")
        for position, spec in enumerate(self.layers):
            if spec.id != position:
                raise ArchitectureError(f"Layer ids must equal their position, layer at {position} has id {spec.id}")
            if spec.kind not in LayerKind.to_list():
                raise ArchitectureError(f"Layer {spec.id} has unknown kind '{spec.kind}'")
            if any(i >= spec.id or i < MODEL_INPUT for i in spec.inputs) or len(spec.inputs) == 0:
                raise ArchitectureError(f"Layer {spec.id} ({spec.name}) must only read from earlier layers")
            if spec.kind == LayerKind.add and len(spec.inputs) != 2:
                raise ArchitectureError(f"add layer {spec.id} must have exactly two inputs")
        last = self.layers[-1]
        if last.kind != LayerKind.linear or last.hyper["out_features"] != self.num_classes:
            raise ArchitectureError(f"The output layer must be a linear layer producing {self.num_classes} logits")
        for spec in self.layers[:-1]:
            if not self.consumers_of(spec.id):
                raise ArchitectureError(f"Layer {spec.id} ({spec.name}) has no consumer; the graph must have a "
                                        f"single output")
        for spec in self.layers:
            for name, shape in param_shapes(spec).items():
                tensor = self.params.get(spec.id, {}).get(name)
                if tensor is None or tensor.shape != shape:
                    raise ShapeMismatchError(f"layer {spec.id} ({spec.name}) parameter '{name}'", shape,
                                             () if tensor is None else tensor.shape)
            for name, shape in buffer_shapes(spec).items():
                tensor = self.buffers.get(spec.id, {}).get(name)
                if tensor is None or tensor.shape != shape:
                    raise ShapeMismatchError(f"layer {spec.id} ({spec.name}) buffer '{name}'", shape,
                                             () if tensor is None else tensor.shape)
        self.infer_shapes()

    def infer_shapes(self) -> Dict[int, Tuple[int, ...]]:
        """ Per-sample output shape of every layer (MODEL_INPUT included) """
        shapes: Dict[int, Tuple[int, ...]] = {MODEL_INPUT: self.input_shape}
        for spec in self.layers:
            shapes[spec.id] = output_shape(spec, [shapes[i] for i in spec.inputs])
        return shapes

    def refresh(self) -> None:
        """ Recompute the channel-dependency edges from the current topology """
        self.edges = {spec.id: self._trace_dependencies(spec.id)
                      for spec in self.layers if spec.kind == LayerKind.conv}

    def _trace_dependencies(self, conv_id: int) -> ChannelDependency:
        dependency = ChannelDependency(producer=conv_id)
        frontier = [conv_id]
        visited = {conv_id}
        while frontier:
            current = frontier.pop(0)
            for consumer_id in self.consumers_of(current):
                if consumer_id in visited:
                    continue
                visited.add(consumer_id)
                consumer = self.layers[consumer_id]
                if consumer.kind in CHANNELWISE_KINDS:
                    if consumer.kind == LayerKind.bn:
                        dependency.bn_ids.append(consumer_id)
                    else:
                        dependency.passthrough_ids.append(consumer_id)
                    frontier.append(consumer_id)
                elif consumer.kind == LayerKind.add:
                    dependency.feeds_add = True
                else:
                    dependency.consumers.append((consumer_id, consumer.kind))
        return dependency

    def is_prune_eligible(self, layer_id: int) -> bool:
        """ Conv layers are eligible unless their channels reach an add junction; linear layers never are """
        dependency = self.edges.get(layer_id)
        return dependency is not None and not dependency.feeds_add

    def channel_count(self, layer_id: int) -> int:
        return int(self.layers[layer_id].hyper["out_channels"])

    def eligible_channels(self) -> List[ChannelRef]:
        return eligible_channels(self)

    # ------------------------------------------------------------------------------------------------------------
    # Parameters

    def parameters(self) -> Dict[ParamKey, Tensor]:
        """ Flat view of all trainable tensors keyed by (layer id, name); the arrays are shared, not copied """
        return {(layer_id, name): tensor
                for layer_id in sorted(self.params) for name, tensor in sorted(self.params[layer_id].items())}

    def num_params(self) -> int:
        return int(sum(tensor.size for tensor in self.parameters().values()))

    def copy(self) -> "ModelGraph":
        clone = ModelGraph([LayerSpec.from_json(spec.to_json()) for spec in self.layers], self.input_shape,
                           self.num_classes,
                           {i: {n: t.copy() for n, t in p.items()} for i, p in self.params.items()},
                           {i: {n: t.copy() for n, t in b.items()} for i, b in self.buffers.items()},
                           self.arch)
        clone.version = self.version
        return clone

    # ------------------------------------------------------------------------------------------------------------
    # Execution

    def forward(self, inputs: Tensor, capture: bool = False, training: bool = False,
                meter: Optional[FlopMeter] = None) -> Tuple[Tensor, Optional[ActivationTrace]]:
        return forward(self, inputs, capture=capture, training=training, meter=meter)

    def backward(self, trace: ActivationTrace, grad_logits: Tensor) -> Dict[ParamKey, Tensor]:
        return backward(self, trace, grad_logits)


def eligible_channels(model: ModelGraph) -> List[ChannelRef]:
    """
    Every prune-eligible channel, ordered by layer id then channel index.
    """
    refs = []
    for spec in model.layers:
        if spec.kind == LayerKind.conv and model.is_prune_eligible(spec.id):
            refs.extend(ChannelRef(spec.id, channel) for channel in range(model.channel_count(spec.id)))
    return refs


def forward(model: ModelGraph, inputs: Tensor, capture: bool = False, training: bool = False,
            meter: Optional[FlopMeter] = None) -> Tuple[Tensor, Optional[ActivationTrace]]:
    """
    Run the model on a batch.
    :param model: the model graph
    :param inputs: (B, C, H, W) batch matching model.input_shape
    :param capture: keep every layer output, argmax records and kernel contexts in an ActivationTrace
    :param training: use batch statistics in batch-norm layers (and update their running statistics)
    :param meter: optional FlopMeter receiving the executed forward MACs under "forward"
    :return: logits (B, c) and the trace (None unless capture)
    """
    inputs = as_tensor(inputs)
    if inputs.ndim != 4 or tuple(inputs.shape[1:]) != model.input_shape:
        raise ShapeMismatchError("model input (B, C, H, W)", ("B",) + model.input_shape, inputs.shape)
    outputs: Dict[int, Tensor] = {MODEL_INPUT: inputs}
    contexts: Dict[int, Any] = {}
    pool_records: Dict[int, kernels.MaxPoolContext] = {}
    for spec in model.layers:
        operands = [outputs[i] for i in spec.inputs]
        x = operands[0]
        params = model.params.get(spec.id, {})
        h = spec.hyper
        if spec.kind == LayerKind.conv:
            out, ctx = kernels.conv2d_forward(x, params["weight"], params.get("bias"), h["stride"], h["padding"])
        elif spec.kind == LayerKind.bn:
            buffers = model.buffers[spec.id]
            out, ctx = kernels.batchnorm_forward(x, params["gamma"], params["beta"], buffers["running_mean"],
                                                 buffers["running_var"], training)
        elif spec.kind == LayerKind.relu:
            out, ctx = kernels.relu_forward(x)
        elif spec.kind == LayerKind.maxpool:
            out, ctx = kernels.maxpool2_forward(x)
            pool_records[spec.id] = ctx
        elif spec.kind == LayerKind.gap:
            out, ctx = kernels.global_avgpool_forward(x)
        elif spec.kind == LayerKind.linear:
            out, ctx = kernels.linear_forward(x, params["weight"], params.get("bias"))
        else:
            out, ctx = kernels.add_forward(operands[0], operands[1]), None
        outputs[spec.id] = out
        if capture:
            contexts[spec.id] = ctx
        if meter is not None:
            flops = layer_flops(spec, [o.shape[1:] for o in operands], out.shape[1:])
            meter.add("forward", flops * x.shape[0])
    logits = outputs[model.layers[-1].id]
    if not capture:
        return logits, None
    return logits, ActivationTrace(inputs, outputs, pool_records, contexts, model.version, training)


def backward(model: ModelGraph, trace: ActivationTrace, grad_logits: Tensor) -> Dict[ParamKey, Tensor]:
    """
    Back-propagate a gradient of the loss with respect to the logits through a captured forward pass.
    :return: gradient of every trainable tensor keyed by (layer id, name)
    """
    if trace.model_version != model.version:
        raise TraceMismatchError("The model was modified after this forward pass was captured")
    upstream: Dict[int, Tensor] = {model.layers[-1].id: as_tensor(grad_logits)}
    grads: Dict[ParamKey, Tensor] = {}

    def send(layer_id: int, grad: Tensor) -> None:
        if layer_id == MODEL_INPUT:
            return
        upstream[layer_id] = upstream[layer_id] + grad if layer_id in upstream else grad

    for spec in reversed(model.layers):
        dy = upstream.pop(spec.id, None)
        if dy is None:
            continue
        ctx = trace.contexts.get(spec.id)
        params = model.params.get(spec.id, {})
        if spec.kind == LayerKind.conv:
            dx, d_weight, d_bias = kernels.conv2d_backward(dy, ctx)
            grads[(spec.id, "weight")] = d_weight
            if "bias" in params:
                grads[(spec.id, "bias")] = d_bias
        elif spec.kind == LayerKind.bn:
            dx, d_gamma, d_beta = kernels.batchnorm_backward(dy, ctx)
            grads[(spec.id, "gamma")] = d_gamma
            grads[(spec.id, "beta")] = d_beta
        elif spec.kind == LayerKind.relu:
            dx = kernels.relu_backward(dy, ctx)
        elif spec.kind == LayerKind.maxpool:
            dx = kernels.maxpool2_backward(dy, ctx)
        elif spec.kind == LayerKind.gap:
            dx = kernels.global_avgpool_backward(dy, ctx)
        elif spec.kind == LayerKind.linear:
            dx, d_weight, d_bias = kernels.linear_backward(dy, ctx, params["weight"])
            grads[(spec.id, "weight")] = d_weight
            if "bias" in params:
                grads[(spec.id, "bias")] = d_bias
        else:
            send(spec.inputs[0], dy)
            send(spec.inputs[1], dy)
            continue
        send(spec.inputs[0], dx)
    return grads
