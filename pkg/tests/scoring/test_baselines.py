import numpy as np
import pytest

from frprune import Criterion, L1NormScorer, L2NormScorer, RandomScorer, make_scorer, score_model
from frprune.util.errors import ConfigError
from tests.helpers import tiny_dataset, tiny_model


def test_l1_and_l2_scores():
    model = tiny_model(channels=(2, 3))
    model.params[0]["weight"][:] = 0
    model.params[0]["weight"][0, 0, 0, :] = [3.0, -4.0, 0.0]
    l1 = L1NormScorer().score(model)
    l2 = L2NormScorer().score(model)
    np.testing.assert_allclose(l1.layer_scores(0), [7.0, 0.0])
    np.testing.assert_allclose(l2.layer_scores(0), [5.0, 0.0])
    assert l1.criterion == "l1"


def test_random_scores_are_reproducible():
    model = tiny_model()
    first = RandomScorer({"seed": 4}).score(model)
    second = RandomScorer({"seed": 4}).score(model)
    np.testing.assert_array_equal(first.scores, second.scores)
    assert np.all((first.scores >= 0) & (first.scores < 1))


def test_every_criterion_covers_the_same_channels():
    model = tiny_model(channels=(4, 6), batch_norm=True)
    dataset = tiny_dataset(num_samples=30)
    tables = [score_model(model, dataset, {"seed": 1}, criterion) for criterion in Criterion.to_list()]
    for table in tables:
        assert table.refs == model.eligible_channels()


def test_unknown_criterion_and_params():
    with pytest.raises(ConfigError):
        make_scorer("taylor")
    with pytest.warns(UserWarning):
        L1NormScorer({"alpha": 2.0})
