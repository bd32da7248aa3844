from typing import Optional
import numpy as np

from frprune.data.datasets import Dataset
from frprune.model.model_graph import ModelGraph
from frprune.scoring.abstract_channel_scorer import AbstractChannelScorer
from frprune.scoring.baseline.l1_norm import L1NormScorer
from frprune.scoring.baseline.l2_norm import L2NormScorer
from frprune.scoring.baseline.random_score import RandomScorer
from frprune.scoring.feature_relevance import FeatureRelevanceScorer
from frprune.scoring.selection import GlobalScoreTable
from frprune.util.errors import ConfigError


class Criterion:
    """ A class to help standardise the channel-importance criteria """
    feature_relevance = "feature_relevance"
    l1 = "l1"
    l2 = "l2"
    random = "random"

    @staticmethod
    def to_list():
        return [Criterion.feature_relevance, Criterion.l1, Criterion.l2, Criterion.random]


def make_scorer(criterion: str, params: Optional[dict] = None, debug: bool = False,
                rng: Optional[np.random.Generator] = None) -> AbstractChannelScorer:
    """
    Create the scorer of a criterion.  Parameters only one criterion understands are dropped for the others.
    :param criterion: one of Criterion.to_list()
    :param params: scorer parameters
    :param debug: print progress
    :param rng: generator for the scoring subset (feature_relevance) or the scores themselves (random)
    """
    params = dict(params or {})
    if criterion == Criterion.feature_relevance:
        return FeatureRelevanceScorer(params, debug=debug, rng=rng)
    if criterion == Criterion.l1:
        return L1NormScorer(debug=debug)
    if criterion == Criterion.l2:
        return L2NormScorer(debug=debug)
    if criterion == Criterion.random:
        return RandomScorer({"seed": params["seed"]} if "seed" in params else {}, debug=debug, rng=rng)
    raise ConfigError(f"Unknown criterion '{criterion}', expected one of {Criterion.to_list()}", key="criterion",
                      section="prune")


def score_model(model: ModelGraph, dataset: Optional[Dataset] = None, cfg: Optional[dict] = None,
                criterion: str = Criterion.feature_relevance, debug: bool = False) -> GlobalScoreTable:
    """
    Score every prune-eligible channel of a model with one criterion.
    :param model: model to score (left unchanged)
    :param dataset: scoring data, required by feature_relevance
    :param cfg: scorer parameters (alpha, beta, weighting, scoring_subset, batch_size, seed, ...)
    :param criterion: feature_relevance | l1 | l2 | random
    :return: GlobalScoreTable covering exactly the eligible channels
    """
    return make_scorer(criterion, cfg, debug).score(model, dataset)
