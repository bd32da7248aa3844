"""
Effort factor: cost of one scoring pass relative to one training epoch, with the epoch taken as three times
the forward FLOPs over the training set.
"""
from dataclasses import dataclass
from typing import Optional
import pandas as pd

from frprune.lrp.lrp_config import LrpConfig
from frprune.lrp.relevance_pass import input_may_be_signed
from frprune.metrics.cost import CostReport, cost_report
from frprune.model.layer_spec import LayerKind
from frprune.model.model_graph import ModelGraph
from frprune.util.errors import ConfigError

# Backward pass taken as twice the forward
EPOCH_FORWARD_MULTIPLIER = 3

EFFORT_COLUMNS = ["scoring_flops", "epoch_flops", "rho", "search_seconds"]


@dataclass
class EffortReport:
    scoring_flops: int
    epoch_flops: int
    rho: float
    search_seconds: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([[self.scoring_flops, self.epoch_flops, self.rho, self.search_seconds]],
                            columns=EFFORT_COLUMNS)


def effort_factor(scoring_flops: int, forward_flops_per_sample: int, num_train: int,
                  search_seconds: float = 0.0) -> EffortReport:
    """
    rho = FLOPs of a scoring pass (forward + relevance sweep over the scoring set) / (3 x forward FLOPs over the
    training set)
    :param scoring_flops: measured FLOPs of the whole scoring pass
    :param forward_flops_per_sample: forward FLOPs of one sample
    :param num_train: training set size
    :param search_seconds: wall-clock time of the scoring pass
    """
    if scoring_flops <= 0 or forward_flops_per_sample <= 0 or num_train <= 0:
        raise ConfigError("effort factor needs positive scoring FLOPs, forward FLOPs and training set size")
    epoch_flops = EPOCH_FORWARD_MULTIPLIER * int(forward_flops_per_sample) * int(num_train)
    return EffortReport(int(scoring_flops), epoch_flops, scoring_flops / epoch_flops, float(search_seconds))


def relevance_sweep_flops(model: ModelGraph, cfg: Optional[LrpConfig] = None) -> int:
    """
    Analytic FLOPs of one relevance sweep for a single sample.  An affine layer costs its MACs once per
    forward-like or transposed product: two for the positive part and two for the negative part, each doubled
    when the layer input can be negative.  Pooling costs one per input element, add one per output element.
    """
    cfg = cfg if cfg is not None else LrpConfig()
    report = cost_report(model)
    flops = 0
    for spec, layer_cost in zip(model.layers, report.layers["flops"]):
        if spec.kind in (LayerKind.conv, LayerKind.linear):
            products = 2 * (2 if input_may_be_signed(model, spec.id) else 1) * (2 if cfg.beta != 0 else 1)
            flops += products * int(layer_cost)
        elif spec.kind in (LayerKind.maxpool, LayerKind.gap, LayerKind.add):
            flops += int(layer_cost)
    return flops


def analytic_effort_factor(cost: CostReport, n_scoring: int, n_train: int, sweep_factor: float = 1.0) -> float:
    """
    rho from a CostReport when the relevance sweep is costed as `sweep_factor` forward passes
    :param cost: cost of the model being scored
    :param n_scoring: scoring set size
    :param n_train: training set size
    :param sweep_factor: relevance sweep FLOPs / forward FLOPs
    """
    per_sample = cost.total_flops * (1.0 + sweep_factor)
    return n_scoring * per_sample / (EPOCH_FORWARD_MULTIPLIER * cost.total_flops * n_train)


def analytic_effort_report(model: ModelGraph, n_scoring: int, n_train: int,
                           cfg: Optional[LrpConfig] = None) -> EffortReport:
    """ EffortReport predicted from the architecture alone """
    cost = cost_report(model)
    sweep = relevance_sweep_flops(model, cfg)
    rho = analytic_effort_factor(cost, n_scoring, n_train, sweep_factor=sweep / cost.total_flops)
    scoring_flops = n_scoring * (cost.total_flops + sweep)
    return EffortReport(int(scoring_flops), EPOCH_FORWARD_MULTIPLIER * cost.total_flops * n_train, rho)
