import numpy as np
import pytest

from frprune.scoring.accuracy import accuracy_from_counts, classwise_accuracy, confusion_counts, predict
from frprune.util.errors import EmptyClassError, LabelRangeError
from tests.helpers import tiny_dataset, tiny_model


def test_confusion_counts():
    predictions = np.array([0, 1, 1, 2, 0, 2])
    labels = np.array([0, 1, 2, 2, 1, 2])
    correct, counts = confusion_counts(predictions, labels, 3)
    np.testing.assert_array_equal(correct, [1, 1, 2])
    np.testing.assert_array_equal(counts, [1, 2, 3])
    np.testing.assert_allclose(accuracy_from_counts(correct, counts), [1.0, 0.5, 2 / 3])
    with pytest.raises(LabelRangeError):
        confusion_counts(predictions, np.array([0, 1, 2, 3, 1, 2]), 3)


def test_argmax_ties_go_to_lowest_class():
    np.testing.assert_array_equal(predict(np.array([[1.0, 1.0], [0.0, 2.0]])), [0, 1])


def test_missing_class_is_an_error():
    with pytest.raises(EmptyClassError):
        accuracy_from_counts(np.array([1, 0]), np.array([2, 0]))


def test_classwise_accuracy_matches_confusion_oracle():
    model = tiny_model()
    dataset = tiny_dataset(num_samples=30)
    logits, _ = model.forward(dataset.images)
    predictions = predict(logits)
    expected = [np.mean(predictions[dataset.labels == p] == p) for p in range(3)]
    np.testing.assert_allclose(classwise_accuracy(model, dataset, batch_size=7), expected)
