import numpy as np
import pytest

from frprune.util.errors import NonFiniteError
from frprune.util.general import SEED_STREAMS, check_finite, fix_decimal_issue, percent_drop, seed_streams


def test_fix_decimal_issue():
    assert fix_decimal_issue(0.111, precision=2) == 0.11
    assert fix_decimal_issue(0.111, precision=3) == 0.111
    assert fix_decimal_issue(0.111, precision=4) == 0.111

    assert fix_decimal_issue(1, precision=3) == 1.000
    assert fix_decimal_issue(1.05, precision=2) == 1.05
    assert fix_decimal_issue(1.006, precision=2) == 1.01
    assert fix_decimal_issue(59.999999) == 60.0


def test_percent_drop():
    assert percent_drop(200, 100) == 50.0
    assert percent_drop(3, 2) == 33.33
    assert percent_drop(855770, 855770) == 0.0
    assert percent_drop(100, 120) == -20.0
    with pytest.raises(ValueError):
        percent_drop(0, 1)


def test_seed_streams_are_independent_and_reproducible():
    first = seed_streams(7)
    second = seed_streams(7)
    assert list(first) == list(SEED_STREAMS)
    draws = {name: rng.random(4) for name, rng in first.items()}
    for name, rng in second.items():
        np.testing.assert_array_equal(rng.random(4), draws[name])
    assert not np.array_equal(draws["shuffle"], draws["augment"])
    assert not np.array_equal(seed_streams(8)["shuffle"].random(4), draws["shuffle"])


def test_check_finite():
    values = np.ones(3, dtype=np.float32)
    assert check_finite(values, "relu") is values
    with pytest.raises(NonFiniteError, match="conv2d produced 2 non-finite"):
        check_finite(np.array([1.0, np.nan, np.inf]), "conv2d")
