from dataclasses import dataclass, field
from typing import Dict, Optional, Union
import numpy as np

from frprune.lrp import rules
from frprune.lrp.lrp_config import BnHandling, LrpConfig
from frprune.model.layer_spec import LayerKind, MODEL_INPUT
from frprune.model.model_graph import ActivationTrace, ModelGraph
from frprune.tensor.kernels import Tensor
from frprune.util.errors import TraceMismatchError


@dataclass
class RelevanceMap:
    """
    Relevance of every layer output for a batch of samples, shapes mirror the ActivationTrace.
    outputs[l] is R^l of layer l (B, ...), `inputs` is the relevance of the model input.
    """
    outputs: Dict[int, Tensor] = field(default_factory=dict)
    inputs: Optional[Tensor] = None
    model_version: int = 0

    def __getitem__(self, layer_id: int) -> Tensor:
        if layer_id == MODEL_INPUT:
            return self.inputs
        return self.outputs[layer_id]

    def totals(self, layer_id: int) -> np.ndarray:
        """ Per-sample sum of a layer's relevance, (B,) """
        relevance = self[layer_id]
        return relevance.reshape(relevance.shape[0], -1).sum(axis=1, dtype=np.float64)

    def channel_relevance(self, layer_id: int) -> Tensor:
        """ Mean relevance per feature map of a conv output, (B, r) """
        relevance = self.outputs[layer_id]
        return relevance.mean(axis=(2, 3), dtype=np.float64).astype(relevance.dtype)


def foldable_bn(model: ModelGraph, bn_id: int) -> Optional[int]:
    """ The conv a batch-norm can be folded into: its input, when the bn is that conv's only consumer """
    producer = model.layer(bn_id).inputs[0]
    if producer == MODEL_INPUT or model.layer(producer).kind != LayerKind.conv:
        return None
    if model.consumers_of(producer) != [bn_id]:
        return None
    return producer


def input_may_be_signed(model: ModelGraph, layer_id: int) -> bool:
    """
    Whether the input of an affine layer can hold negative values.  Walks back through pooling layers;
    a rectifier output is non-negative, everything else (the model input, bn, add, conv) may be signed.
    """
    source = model.layer(layer_id).inputs[0]
    while source != MODEL_INPUT and model.layer(source).kind in (LayerKind.maxpool, LayerKind.gap):
        source = model.layer(source).inputs[0]
    return source == MODEL_INPUT or model.layer(source).kind != LayerKind.relu


def full_relevance_pass(model: ModelGraph, trace: ActivationTrace, labels: Union[int, np.ndarray],
                        cfg: Optional[LrpConfig] = None, meter=None) -> RelevanceMap:
    """
    Propagate relevance from the output to every layer in one reverse sweep over the graph.
    The output relevance is the delta on each sample's true class.  Relevance reaching a layer output from
    several consumers is summed.
    :param model: the model the trace was captured from, unchanged since
    :param trace: eval-mode ActivationTrace of a batch
    :param labels: true class per sample (B,), or one label for a single-sample trace
    :param cfg: rule settings, LrpConfig() when None
    :param meter: optional FlopMeter receiving the relevance MACs
    :return: RelevanceMap of the batch
    """
    if trace.model_version != model.version:
        raise TraceMismatchError(f"Trace was captured from model version {trace.model_version}, "
                                 f"the model is now at version {model.version}")
    if trace.training:
        raise TraceMismatchError("Relevance needs an eval-mode trace (batch-norm running statistics)")
    cfg = cfg if cfg is not None else LrpConfig()
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (trace.inputs.shape[0],):
        raise TraceMismatchError(f"{labels.size} label(s) for a trace of {trace.inputs.shape[0]} sample(s)")

    output_id = model.layers[-1].id
    pending: Dict[int, Tensor] = {output_id: rules.init_output_relevance_batch(labels, model.num_classes)}
    relevance_map = RelevanceMap(model_version=model.version)
    # conv id -> bn id folded into it
    folded: Dict[int, int] = {}

    def send(layer_id: int, relevance: Tensor) -> None:
        if layer_id == MODEL_INPUT:
            relevance_map.inputs = relevance if relevance_map.inputs is None else relevance_map.inputs + relevance
        elif layer_id in pending:
            pending[layer_id] = pending[layer_id] + relevance
        else:
            pending[layer_id] = relevance

    for spec in reversed(model.layers):
        relevance = pending.pop(spec.id, None)
        if relevance is None:
            continue
        relevance_map.outputs[spec.id] = relevance
        source = spec.inputs[0]
        a = trace.outputs[source]
        params = model.params.get(spec.id, {})
        h = spec.hyper

        if spec.kind == LayerKind.linear:
            send(source, rules.relevance_backward_affine(a, params["weight"], params.get("bias"), relevance, cfg,
                                                          meter=meter))
        elif spec.kind == LayerKind.conv:
            if spec.id in folded:
                bn_id = folded[spec.id]
                downstream = rules.relevance_through_bn(relevance, model.params[bn_id], model.buffers[bn_id], a,
                                                        params["weight"], params.get("bias"), cfg, h["stride"],
                                                        h["padding"], meter)
            else:
                downstream = rules.relevance_backward_affine(a, params["weight"], params.get("bias"), relevance,
                                                             cfg, h["stride"], h["padding"], meter)
            send(source, downstream)
        elif spec.kind == LayerKind.bn:
            producer = foldable_bn(model, spec.id)
            if cfg.bn_handling == BnHandling.fold and producer is not None:
                folded[producer] = spec.id
            send(source, relevance)
        elif spec.kind == LayerKind.relu:
            send(source, rules.relevance_through_relu(relevance))
        elif spec.kind == LayerKind.maxpool:
            send(source, rules.relevance_through_maxpool(relevance, trace.pool_records.get(spec.id), cfg, a, meter))
        elif spec.kind == LayerKind.gap:
            send(source, rules.relevance_through_gap(relevance, a, cfg, meter))
        else:
            first, second = rules.relevance_through_add(relevance, a, trace.outputs[spec.inputs[1]], cfg, meter)
            send(spec.inputs[0], first)
            send(spec.inputs[1], second)
    return relevance_map
