import pytest

from frprune.training.schedule import LrSchedule, PruneSchedule, should_prune
from frprune.util.errors import ConfigError


def test_default_schedule_event_count():
    schedule = PruneSchedule(total_epochs=200, prune_until=150, interval=20, channels_per_event=42)
    assert schedule.event_epochs() == [20, 40, 60, 80, 100, 120, 140]
    assert schedule.num_events == 7
    assert schedule.planned_removals() == 294


def test_should_prune():
    schedule = PruneSchedule(200, 150, 20, 42)
    assert should_prune(20, schedule)
    assert should_prune(140, schedule)
    assert not should_prune(150, schedule)
    assert not should_prune(160, schedule)
    assert not should_prune(21, schedule)
    assert not should_prune(0, schedule)


@pytest.mark.parametrize("total, until, interval", [(10, 10, 3), (12, 7, 1), (30, 30, 5), (9, 4, 4), (50, 45, 7)])
def test_event_set_matches_brute_force(total, until, interval):
    schedule = PruneSchedule(total, until, interval, 1)
    expected = [e for e in range(1, total + 1) if e % interval == 0 and e < until]
    assert schedule.event_epochs() == expected
    assert [e for e in range(1, total + 1) if should_prune(e, schedule)] == expected


def test_interval_beyond_prune_window_has_no_events():
    schedule = PruneSchedule(10, 5, 6, 3)
    assert schedule.num_events == 0
    assert schedule.planned_removals() == 0


def test_schedule_validation():
    with pytest.raises(ConfigError):
        PruneSchedule(100, 150, 20, 1)
    with pytest.raises(ConfigError):
        PruneSchedule(100, 50, 0, 1)
    with pytest.raises(ConfigError):
        PruneSchedule(0, 0, 1, 1)
    with pytest.raises(ConfigError):
        PruneSchedule(10, 5, 1, -1)


def test_lr_schedule_steps_after_milestones():
    schedule = LrSchedule(0.1, [(100, 10.0), (150, 10.0)])
    assert schedule.rate(1) == 0.1
    assert schedule.rate(100) == 0.1
    assert schedule.rate(101) == pytest.approx(0.01)
    assert schedule.rate(150) == pytest.approx(0.01)
    assert schedule.rate(151) == pytest.approx(0.001)
    assert LrSchedule(0.05).rate(1000) == 0.05


def test_lr_schedule_validation():
    with pytest.raises(ConfigError):
        LrSchedule(0.0)
    with pytest.raises(ConfigError):
        LrSchedule(0.1, [(150, 10.0), (100, 10.0)])
    with pytest.raises(ConfigError):
        LrSchedule(0.1, [(100, 0.0)])


def test_stage_count_versus_events():
    default = PruneSchedule(200, 150, 20, 42)
    assert default.k == 7 and default.num_events == 7
    toy = PruneSchedule(30, 21, 3, 15)
    assert toy.k == 7
    assert toy.num_events == 6
    assert toy.event_epochs() == [3, 6, 9, 12, 15, 18]
    for total, until, interval in [(10, 10, 3), (12, 7, 1), (30, 30, 5), (9, 4, 4), (50, 45, 7)]:
        schedule = PruneSchedule(total, until, interval, 1)
        expected = schedule.k - 1 if until % interval == 0 else schedule.k
        assert schedule.num_events == expected
