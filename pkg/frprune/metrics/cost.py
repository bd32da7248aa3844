from dataclasses import dataclass
from typing import Optional, Tuple
import numpy as np
import pandas as pd

from frprune.model.layer_spec import MODEL_INPUT, layer_flops, output_shape, param_shapes
from frprune.model.model_graph import ModelGraph
from frprune.util.errors import ShapeMismatchError
from frprune.util.general import percent_drop

LAYER_COLUMNS = ["layer_id", "name", "kind", "output_shape", "params", "flops"]


@dataclass
class CostReport:
    """
    Parameter and per-sample FLOP count of a model, one multiply-accumulate counted as one FLOP.
    `layers` holds the per-layer breakdown; the totals are its column sums.
    """
    total_params: int
    total_flops: int
    layers: pd.DataFrame

    def to_dict(self) -> dict:
        return {"params": self.total_params, "flops": self.total_flops}


def count_params(model: ModelGraph) -> int:
    """ Number of trainable scalars, from the layer shapes alone """
    return int(sum(int(np.prod(shape)) for spec in model.layers for shape in param_shapes(spec).values()))


def count_flops(model: ModelGraph, input_shape: Optional[Tuple[int, ...]] = None) -> int:
    """
    FLOPs of one forward pass of a single sample.
    conv: Kh*Kw*Cin*Cout*Hout*Wout, linear: in*out, bn/relu/add: one per output element,
    maxpool/gap: one per input element.
    """
    return cost_report(model, input_shape).total_flops


def cost_report(model: ModelGraph, input_shape: Optional[Tuple[int, ...]] = None) -> CostReport:
    """
    Per-layer parameter and FLOP breakdown.
    :param model: the model
    :param input_shape: (C, H, W) of one sample, the model's own input shape when None
    """
    input_shape = tuple(input_shape) if input_shape is not None else model.input_shape
    if input_shape[0] != model.input_shape[0]:
        raise ShapeMismatchError("cost report input channels", model.input_shape[:1], input_shape[:1])
    shapes = {MODEL_INPUT: input_shape}
    rows = []
    for spec in model.layers:
        inputs = [shapes[i] for i in spec.inputs]
        shapes[spec.id] = output_shape(spec, inputs)
        rows.append({
            "layer_id": spec.id,
            "name": spec.name,
            "kind": spec.kind,
            "output_shape": "x".join(str(s) for s in shapes[spec.id]),
            "params": int(sum(int(np.prod(shape)) for shape in param_shapes(spec).values())),
            "flops": int(layer_flops(spec, inputs, shapes[spec.id])),
        })
    layers = pd.DataFrame(rows, columns=LAYER_COLUMNS)
    return CostReport(int(layers["params"].sum()), int(layers["flops"].sum()), layers)


def cost_drop(baseline: CostReport, pruned: CostReport) -> dict:
    """ Percentage drop of parameters and FLOPs from a baseline to a pruned model """
    return {
        "params_drop_percent": percent_drop(baseline.total_params, pruned.total_params),
        "flops_drop_percent": percent_drop(baseline.total_flops, pruned.total_flops),
    }
