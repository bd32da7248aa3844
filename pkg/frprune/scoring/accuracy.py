from typing import Tuple
import numpy as np

from frprune.data.datasets import Dataset
from frprune.model.model_graph import ModelGraph
from frprune.util.errors import EmptyClassError, EmptyDatasetError, LabelRangeError


def predict(logits: np.ndarray) -> np.ndarray:
    """ Argmax over classes; ties go to the lowest class index """
    return np.argmax(logits, axis=1)


def confusion_counts(predictions: np.ndarray, labels: np.ndarray, c: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-class tallies.
    :return: (correct predictions per true class, samples per true class), both (c,)
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelRangeError(f"labels must lie in [0, {c})")
    correct = np.bincount(labels[np.asarray(predictions) == labels], minlength=c)
    counts = np.bincount(labels, minlength=c)
    return correct.astype(np.int64), counts.astype(np.int64)


def accuracy_from_counts(correct: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """ correct_p / count_p for every class; raises when a class has no samples """
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise EmptyClassError(missing.tolist())
    return correct / counts


def classwise_accuracy(model: ModelGraph, dataset: Dataset, batch_size: int = 256) -> np.ndarray:
    """
    Fraction of correctly classified samples per class (eval mode, no augmentation).
    :return: (c,) accuracies
    """
    correct, counts = evaluate_counts(model, dataset, batch_size)
    return accuracy_from_counts(correct, counts)


def evaluate_counts(model: ModelGraph, dataset: Dataset, batch_size: int = 256) -> Tuple[np.ndarray, np.ndarray]:
    if len(dataset) == 0:
        raise EmptyDatasetError("Cannot measure accuracy on an empty dataset")
    correct = np.zeros(model.num_classes, dtype=np.int64)
    counts = np.zeros(model.num_classes, dtype=np.int64)
    for images, labels in dataset.batches(batch_size):
        logits, _ = model.forward(images, training=False)
        batch_correct, batch_counts = confusion_counts(predict(logits), labels, model.num_classes)
        correct += batch_correct
        counts += batch_counts
    return correct, counts
