import pytest

from frprune import FeatureRelevanceScorer, analytic_effort_report, cost_report, effort_factor
from frprune.metrics.effort import analytic_effort_factor, relevance_sweep_flops
from frprune.util.errors import ConfigError
from tests.helpers import tiny_dataset, tiny_model


def test_sweep_costed_as_one_forward_gives_two_thirds():
    cost = cost_report(tiny_model())
    assert analytic_effort_factor(cost, 1000, 1000, sweep_factor=1.0) == pytest.approx(2.0 / 3.0)


def test_effort_is_linear_in_the_scoring_set():
    cost = cost_report(tiny_model())
    full = analytic_effort_factor(cost, 1000, 1000)
    assert analytic_effort_factor(cost, 100, 1000) == pytest.approx(0.1 * full)


def test_effort_factor_definition():
    report = effort_factor(scoring_flops=600, forward_flops_per_sample=10, num_train=20, search_seconds=1.5)
    assert report.epoch_flops == 600
    assert report.rho == 1.0
    assert list(report.to_frame().columns) == ["scoring_flops", "epoch_flops", "rho", "search_seconds"]
    with pytest.raises(ConfigError):
        effort_factor(0, 10, 20)


def test_measured_effort_agrees_with_analytic_estimate():
    model = tiny_model(channels=(4, 6), batch_norm=True)
    dataset = tiny_dataset(num_samples=40)
    scorer = FeatureRelevanceScorer({"batch_size": 16})
    scorer.score(model, dataset)
    measured = effort_factor(scorer.meter.total(), cost_report(model).total_flops, num_train=400)
    analytic = analytic_effort_report(model, n_scoring=40, n_train=400, cfg=scorer.lrp_config)
    assert measured.rho == pytest.approx(analytic.rho, rel=0.1)
    assert relevance_sweep_flops(model) > cost_report(model).total_flops
