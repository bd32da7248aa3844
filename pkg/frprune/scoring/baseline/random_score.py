from typing import Optional
import numpy as np

from frprune.model.model_graph import ModelGraph
from frprune.scoring.abstract_channel_scorer import AbstractChannelScorer


class RandomScorer(AbstractChannelScorer):
    """
    Uniform random scores in [0, 1).  Useful as a lower bound when comparing criteria.  Successive calls keep
    drawing from the same seeded generator, so a whole run is reproducible.
    """

    def __init__(self, params: dict = {}, debug: bool = False, rng: Optional[np.random.Generator] = None):
        super().__init__(name=self.__class__.__name__, debug=debug)
        self.criterion = "random"
        self.seed: int = 0

        # Update all params with those that were passed in
        self.update_params(params)

        self.rng = rng if rng is not None else np.random.default_rng(self.seed)

    def score_layer(self, model: ModelGraph, layer_id: int) -> np.ndarray:
        """ See parent AbstractChannelScorer class for parameter descriptions """
        return self.rng.random(model.channel_count(layer_id))
