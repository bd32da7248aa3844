from collections import defaultdict
from typing import Dict, Iterable, List, Optional
import numpy as np

from frprune.model.layer_spec import ChannelRef, LayerKind, LayerSpec, param_shapes
from frprune.model.model_graph import ModelGraph
from frprune.tensor.optim import OptimState
from frprune.util.errors import IneligibleChannelError, LayerAnnihilationError


def group_victims(model: ModelGraph, victims: Iterable[ChannelRef]) -> Dict[int, List[int]]:
    """
    Validate victims and group their channel indices by layer.  Nothing is modified here, so a failing
    prune step leaves the model untouched.
    """
    grouped: Dict[int, set] = defaultdict(set)
    for ref in victims:
        layer_id, channel = int(ref[0]), int(ref[1])
        if not 0 <= layer_id < len(model.layers) or not model.is_prune_eligible(layer_id):
            raise IneligibleChannelError(f"Channel {channel} of layer {layer_id} is not prune-eligible")
        if not 0 <= channel < model.channel_count(layer_id):
            raise IneligibleChannelError(f"Layer {layer_id} has {model.channel_count(layer_id)} channels, "
                                         f"cannot remove channel {channel}")
        grouped[layer_id].add(channel)
    for layer_id, channels in grouped.items():
        if len(channels) >= model.channel_count(layer_id):
            raise LayerAnnihilationError(f"Removing {len(channels)} channel(s) would leave layer {layer_id} "
                                         f"({model.layer(layer_id).name}) without channels")
    return {layer_id: sorted(channels) for layer_id, channels in sorted(grouped.items())}


def removal_param_delta(model: ModelGraph, victims: Iterable[ChannelRef]) -> int:
    """
    Exact number of trainable scalars removed by surgery_remove_channels(model, victims), computed from the
    post-surgery layer shapes (adjacent victim layers share the overlap of their slices).
    """
    new_hyper = {spec.id: dict(spec.hyper) for spec in model.layers}
    for layer_id, channels in group_victims(model, victims).items():
        kept = model.channel_count(layer_id) - len(channels)
        dependency = model.edges[layer_id]
        new_hyper[layer_id]["out_channels"] = kept
        for bn_id in dependency.bn_ids:
            new_hyper[bn_id]["channels"] = kept
        for consumer_id, kind in dependency.consumers:
            new_hyper[consumer_id]["in_channels" if kind == LayerKind.conv else "in_features"] = kept

    def count(spec: LayerSpec) -> int:
        return sum(int(np.prod(shape)) for shape in param_shapes(spec).values())

    before = sum(count(spec) for spec in model.layers)
    after = sum(count(LayerSpec(spec.id, spec.kind, spec.inputs, spec.name, new_hyper[spec.id]))
                for spec in model.layers)
    return before - after


def _slice(model: ModelGraph, optim: Optional[OptimState], layer_id: int, name: str, keep: np.ndarray,
           axis: int, buffer: bool = False) -> None:
    store = model.buffers if buffer else model.params
    if name not in store.get(layer_id, {}):
        return
    store[layer_id][name] = np.ascontiguousarray(np.take(store[layer_id][name], keep, axis=axis))
    if optim is not None and not buffer:
        optim.slice_buffer((layer_id, name), keep, axis)


def surgery_remove_channels(model: ModelGraph, victims: List[ChannelRef], optim: Optional[OptimState] = None) -> None:
    """
    Physically remove conv output channels and everything indexed by them:
      - the producer's filter rows and bias entries
      - every batch-norm entry (scale, shift, running statistics) on the channel's path
      - the matching input slice of every consuming conv or linear layer
      - the momentum buffers of all those tensors (sliced, never reset)
    Dependency edges are recomputed afterwards.
    :param model: model to modify in place
    :param victims: channels to remove, all prune-eligible
    :param optim: optimiser whose momentum buffers follow the parameters
    """
    grouped = group_victims(model, victims)
    if not grouped:
        return

    for layer_id, channels in grouped.items():
        dependency = model.edges[layer_id]
        count = model.channel_count(layer_id)
        keep = np.setdiff1d(np.arange(count), np.asarray(channels, dtype=np.int64))
        kept = int(keep.size)

        _slice(model, optim, layer_id, "weight", keep, axis=0)
        _slice(model, optim, layer_id, "bias", keep, axis=0)
        model.layer(layer_id).hyper["out_channels"] = kept

        for bn_id in dependency.bn_ids:
            for name in ("gamma", "beta"):
                _slice(model, optim, bn_id, name, keep, axis=0)
            for name in ("running_mean", "running_var"):
                _slice(model, optim, bn_id, name, keep, axis=0, buffer=True)
            model.layer(bn_id).hyper["channels"] = kept

        for consumer_id, kind in dependency.consumers:
            _slice(model, optim, consumer_id, "weight", keep, axis=1)
            if kind == LayerKind.conv:
                model.layer(consumer_id).hyper["in_channels"] = kept
            else:
                model.layer(consumer_id).hyper["in_features"] = kept

    model.version += 1
    model.validate()
    model.refresh()
