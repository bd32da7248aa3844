"""
Feature-relevance channel scores: mean channel relevance per true class, combined across classes with weights
that favour classes the model currently classifies worse.
"""
import datetime as dt
import warnings
from dataclasses import dataclass
from typing import Dict, Optional
import numpy as np
from tqdm import tqdm

from frprune.data.datasets import Dataset, seeded_subset
from frprune.lrp.lrp_config import LrpConfig
from frprune.lrp.relevance_pass import full_relevance_pass
from frprune.model.model_graph import ModelGraph
from frprune.scoring.abstract_channel_scorer import AbstractChannelScorer
from frprune.scoring.accuracy import confusion_counts, predict
from frprune.scoring.selection import GlobalScoreTable
from frprune.util.errors import ClassWeightError, ConfigError, EmptyClassError, EmptyDatasetError
from frprune.util.flop_meter import FlopMeter
from frprune.util.output import pretty_time

# Lower bound of the normalised class accuracy, keeps 1 / lambda finite
LAMBDA_FLOOR = 0.01


class WeightingMode:
    """ How classes are weighted when relevance rows are combined """
    accuracy = "accuracy"
    uniform = "uniform"

    @staticmethod
    def to_list():
        return [WeightingMode.accuracy, WeightingMode.uniform]


def channel_average(relevance: np.ndarray) -> np.ndarray:
    """
    Mean relevance of every feature map of one sample.
    :param relevance: (r, h, w) relevance of a conv output
    :return: (r,)
    """
    return relevance.reshape(relevance.shape[0], -1).mean(axis=1)


class FeatureRelevanceMatrix:
    """
    Classes x channels matrix of summed channel relevances for one layer, with a per-class sample count.
    Rows become class means once normalize_rows has been called.
    """

    def __init__(self, layer_id: int, num_classes: int, num_channels: int) -> None:
        self.layer_id = layer_id
        self.matrix = np.zeros((num_classes, num_channels), dtype=np.float64)
        self.counts = np.zeros(num_classes, dtype=np.int64)
        self.normalized = False

    def accumulate(self, label: int, relevance: np.ndarray) -> None:
        """ Add one sample's channel relevance vector to the row of its class """
        self.matrix[int(label)] += relevance
        self.counts[int(label)] += 1

    def accumulate_batch(self, labels: np.ndarray, relevance: np.ndarray) -> None:
        """ accumulate() for a batch, (B,) labels and (B, r) vectors, applied in sample order """
        np.add.at(self.matrix, np.asarray(labels, dtype=np.int64), relevance.astype(np.float64))
        self.counts += np.bincount(labels, minlength=self.counts.shape[0])

    def normalize_rows(self, classes: Optional[np.ndarray] = None) -> None:
        """
        Divide rows by their class count.
        :param classes: rows to normalise, all of them when None; each needs at least one sample
        """
        rows = np.arange(self.counts.shape[0]) if classes is None else np.asarray(classes, dtype=np.int64)
        missing = rows[self.counts[rows] == 0]
        if missing.size:
            raise EmptyClassError(missing.tolist())
        if not self.normalized:
            self.matrix[rows] /= self.counts[rows][:, None]
            self.normalized = True


@dataclass
class ClassAccuracy:
    """
    acc: accuracy per class; lam: acc / max(acc), floored at LAMBDA_FLOOR; v_p = 1 / lam; v = sum(v_p)
    """
    acc: np.ndarray
    lam: np.ndarray
    v_p: np.ndarray
    v: float


def class_weights(acc: np.ndarray, mode: str = WeightingMode.accuracy) -> ClassAccuracy:
    """
    Turn class accuracies into combination weights.  In accuracy mode a class that is recognised worse gets a
    proportionally larger weight, the best class has weight 1.  Uniform mode weights every class with 1.
    """
    acc = np.asarray(acc, dtype=np.float64)
    if mode == WeightingMode.uniform:
        ones = np.ones_like(acc)
        return ClassAccuracy(acc, ones, ones, float(acc.shape[0]))
    if mode != WeightingMode.accuracy:
        raise ClassWeightError(f"Unknown weighting mode '{mode}', expected one of {WeightingMode.to_list()}")
    if acc.size == 0 or np.max(acc) <= 0:
        raise ClassWeightError("Every class accuracy is zero; accuracy weighting is undefined")
    lam = np.maximum(acc / np.max(acc), LAMBDA_FLOOR)
    v_p = 1.0 / lam
    return ClassAccuracy(acc, lam, v_p, float(v_p.sum()))


def feature_scores(matrix: np.ndarray, weights: ClassAccuracy) -> np.ndarray:
    """ FS = (1/v) * sum_p v_p * FM[p, :] """
    return (weights.v_p[:, None] * matrix).sum(axis=0) / weights.v


class FeatureRelevanceScorer(AbstractChannelScorer):
    """
    Scores each channel by its relevance for the correct decision, averaged per class and weighted by
    class-wise accuracy.  One eval-mode forward pass and one relevance sweep per batch of the scoring set fill
    the relevance matrices of all eligible layers at once; the class accuracies come from the same pass.
    """

    def __init__(self, params: dict = {}, debug: bool = False, rng: Optional[np.random.Generator] = None):
        super().__init__(name=self.__class__.__name__, debug=debug)
        self.criterion = "feature_relevance"

        # ----------------------------------------------------------------------------
        # Set default values for input params
        self.alpha: float = 2.0
        self.beta: float = 1.0
        self.epsilon: float = 1e-9
        self.pool_rule: str = "winner-take-all"
        self.bn_handling: str = "fold"
        self.weighting: str = WeightingMode.accuracy
        self.scoring_subset: int = 0  # samples drawn for scoring, 0 for the whole dataset
        self.batch_size: int = 32
        self.seed: int = 0  # subset seed when no generator is supplied

        # ----------------------------------------------------------------------------
        # Update the above with input params
        self.update_params(params)
        if self.weighting not in WeightingMode.to_list():
            raise ConfigError(f"weighting must be one of {WeightingMode.to_list()}", key="weighting",
                              section="prune")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1", key="batch_size", section="prune")
        self.lrp_config = LrpConfig({"alpha": self.alpha, "beta": self.beta, "epsilon": self.epsilon,
                                     "pool_rule": self.pool_rule, "bn_handling": self.bn_handling})
        self.rng = rng if rng is not None else np.random.default_rng(self.seed)

        # ----------------------------------------------------------------------------
        # Results of the last call to score
        self.matrices: Dict[int, FeatureRelevanceMatrix] = {}
        self.accuracy: Optional[ClassAccuracy] = None
        self.meter = FlopMeter()
        self.num_scored: int = 0
        self.search_seconds: float = 0.0

    def score(self, model: ModelGraph, dataset: Optional[Dataset] = None) -> GlobalScoreTable:
        """ See parent AbstractChannelScorer class for parameter descriptions """
        if dataset is None or len(dataset) == 0:
            raise EmptyDatasetError("Feature relevance scoring needs a non-empty scoring set")
        start = dt.datetime.now().timestamp()
        scoring_set = seeded_subset(dataset, self.scoring_subset, self.rng)
        layer_ids = sorted({ref.layer_id for ref in model.eligible_channels()})
        c = model.num_classes
        self.matrices = {layer_id: FeatureRelevanceMatrix(layer_id, c, model.channel_count(layer_id))
                         for layer_id in layer_ids}
        self.meter.reset()
        correct = np.zeros(c, dtype=np.int64)
        counts = np.zeros(c, dtype=np.int64)

        num_batches = -(-len(scoring_set) // self.batch_size)
        for images, labels in tqdm(scoring_set.batches(self.batch_size), total=num_batches, disable=not self.debug,
                                   desc="relevance", leave=False):
            logits, trace = model.forward(images, capture=True, training=False, meter=self.meter)
            batch_correct, batch_counts = confusion_counts(predict(logits), labels, c)
            correct += batch_correct
            counts += batch_counts
            relevance = full_relevance_pass(model, trace, labels, self.lrp_config, self.meter)
            for layer_id in layer_ids:
                self.matrices[layer_id].accumulate_batch(labels, relevance.channel_relevance(layer_id))

        present = counts > 0
        if not np.all(present):
            warnings.warn(f"Class(es) {np.flatnonzero(~present).tolist()} have no samples in the scoring set and "
                          f"are left out of the weighting")
        self.accuracy = class_weights(correct[present] / counts[present], self.weighting)
        layer_scores = {}
        for layer_id, relevance_matrix in self.matrices.items():
            relevance_matrix.normalize_rows(np.flatnonzero(present))
            layer_scores[layer_id] = feature_scores(relevance_matrix.matrix[present], self.accuracy)

        self.num_scored = len(scoring_set)
        self.search_seconds = dt.datetime.now().timestamp() - start
        self.debug_message(f"Scored {len(layer_ids)} layer(s) on {self.num_scored} samples in "
                           f"{pretty_time(self.search_seconds)}")
        self.table = GlobalScoreTable.from_layer_scores(model, layer_scores, self.criterion)
        return self.table
