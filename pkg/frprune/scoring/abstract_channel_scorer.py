from abc import ABC
import warnings
from typing import Optional
import numpy as np

from frprune.data.datasets import Dataset
from frprune.model.model_graph import ModelGraph
from frprune.scoring.selection import GlobalScoreTable


class AbstractChannelScorer(ABC):
    """ Base class for any channel-importance criterion """

    def __init__(self, name: str = "AbstractChannelScorer", params: dict = {}, debug: bool = False):
        self.name = name
        self.debug = debug

        # Criterion name written into score tables
        self.criterion = "abstract"

        # Last table computed, kept for inspection
        self.table: Optional[GlobalScoreTable] = None

    def update_params(self, params: dict) -> None:
        """
        Update parameters -- overrides any defaults set in __init__
        :param params: dictionary of <parameter_name>, <parameter_value> pairs
        :return: None
        """
        protected_params = ["name", "debug", "criterion", "table"]
        for key, value in params.items():
            if key in protected_params:
                warnings.warn(f"Cannot update parameter {key} as it is protected")
                continue
            if hasattr(self, key):
                setattr(self, key, value)
            else:
                warnings.warn(f"{self.__class__.__name__} does not have an attribute {key}")

    def score_layer(self, model: ModelGraph, layer_id: int) -> np.ndarray:
        """
        Score every output channel of one prune-eligible conv layer.
        This function determines the criterion and is implemented differently in all child instances
        :param model: the model
        :param layer_id: id of a prune-eligible conv layer
        :return: one score per live channel, lower means less important
        """
        raise NotImplementedError

    def score(self, model: ModelGraph, dataset: Optional[Dataset] = None) -> GlobalScoreTable:
        """
        Score every prune-eligible channel of a model
        :param model: the model to score
        :param dataset: data the criterion needs (unused by weight-based criteria)
        :return: GlobalScoreTable covering exactly the eligible channels
        """
        layer_ids = sorted({ref.layer_id for ref in model.eligible_channels()})
        layer_scores = {layer_id: self.score_layer(model, layer_id) for layer_id in layer_ids}
        self.table = GlobalScoreTable.from_layer_scores(model, layer_scores, self.criterion)
        return self.table

    def debug_message(self, *message):
        if self.debug:
            print(*message)
