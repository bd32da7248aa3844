import numpy as np

from frprune.model.model_graph import ModelGraph
from frprune.scoring.abstract_channel_scorer import AbstractChannelScorer


class L2NormScorer(AbstractChannelScorer):
    """ Filter magnitude baseline: Euclidean norm of each output filter """

    def __init__(self, params: dict = {}, debug: bool = False):
        super().__init__(name=self.__class__.__name__, debug=debug)
        self.criterion = "l2"

        # Update all params with those that were passed in
        self.update_params(params)

    def score_layer(self, model: ModelGraph, layer_id: int) -> np.ndarray:
        """ See parent AbstractChannelScorer class for parameter descriptions """
        weight = model.params[layer_id]["weight"].astype(np.float64)
        return np.sqrt((weight.reshape(weight.shape[0], -1) ** 2).sum(axis=1))
