import numpy as np

from frprune.model.model_graph import ModelGraph
from frprune.scoring.abstract_channel_scorer import AbstractChannelScorer


class L1NormScorer(AbstractChannelScorer):
    """ Filter magnitude baseline: sum of absolute weights of each output filter """

    def __init__(self, params: dict = {}, debug: bool = False):
        super().__init__(name=self.__class__.__name__, debug=debug)
        self.criterion = "l1"

        # Update all params with those that were passed in
        self.update_params(params)

    def score_layer(self, model: ModelGraph, layer_id: int) -> np.ndarray:
        """ See parent AbstractChannelScorer class for parameter descriptions """
        weight = model.params[layer_id]["weight"]
        return np.abs(weight).reshape(weight.shape[0], -1).sum(axis=1, dtype=np.float64)
