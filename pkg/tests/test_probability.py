import math

import numpy as np
import pytest

from undercut.mempool import ChainParams
from undercut.probability import (
    InvalidShiftError,
    RacePoint,
    chain_rates,
    deep_catchup_bound,
    win_prob_d1,
    win_prob_series,
    win_prob_series_truncated,
)


def test_chain_rates_formula():
    params = ChainParams(block_size_limit=1, block_interval=600.0)
    main, fork = chain_rates(0.3, params)
    assert main == pytest.approx(0.7 / 600)
    assert fork == pytest.approx(0.3 / 600)
    assert main + fork == pytest.approx(1 / 600)
    assert chain_rates(0.0, params)[1] == 0.0
    assert chain_rates(1.0, params)[0] == 0.0
    with pytest.raises(ValueError):
        chain_rates(1.5, params)


def test_win_prob_d1():
    assert win_prob_d1(0.3, 0.1) == pytest.approx(0.4)
    assert win_prob_d1(0.5, 0.0) == pytest.approx(0.5)
    assert win_prob_d1(0.176, 0.324) == pytest.approx(0.5)
    with pytest.raises(InvalidShiftError):
        win_prob_d1(0.8, 0.3)
    with pytest.raises(InvalidShiftError):
        win_prob_d1(0.1, -0.2)


def test_race_point_validation():
    with pytest.raises(ValueError):
        RacePoint(fork_power=1.2, safe_depth=2)
    with pytest.raises(ValueError):
        RacePoint(fork_power=0.5, safe_depth=2, lead=2)
    with pytest.raises(ValueError):
        RacePoint(fork_power=0.5, safe_depth=0)


def test_win_prob_series_tie_values():
    # truncated-summation oracle at one-half power: 1/3, 1/6, 2/3
    for lead, expected in [(0, 1 / 3), (-1, 1 / 6), (1, 2 / 3)]:
        point = RacePoint(fork_power=0.5, safe_depth=2, lead=lead)
        assert win_prob_series_truncated(point) == pytest.approx(expected, abs=1e-9)
        assert win_prob_series(point) == pytest.approx(expected)


def test_win_prob_series_degenerate_limits():
    assert win_prob_series(RacePoint(0.0, 2, 0)) == 0.0
    assert win_prob_series(RacePoint(1.0, 2, 0)) == 1.0
    assert win_prob_series_truncated(RacePoint(0.0, 2, 1)) == 0.0
    assert win_prob_series_truncated(RacePoint(1.0, 2, -1)) == 1.0


def test_closed_form_matches_truncated_series():
    for a in np.arange(0.05, 0.96, 0.05):
        for depth in (1, 2):
            for lead in (-1, 0, 1):
                if abs(lead) >= depth:
                    continue
                point = RacePoint(fork_power=float(a), safe_depth=depth, lead=lead)
                assert abs(win_prob_series(point) - win_prob_series_truncated(point)) < 1e-9


def test_win_prob_series_monotone():
    grid = np.arange(0.05, 0.96, 0.05)
    for depth, lead in [(1, 0), (2, -1), (2, 0), (2, 1)]:
        values = [win_prob_series(RacePoint(float(a), depth, lead)) for a in grid]
        assert all(b > a for a, b in zip(values, values[1:]))
    for a in grid:
        by_lead = [win_prob_series(RacePoint(float(a), 2, lead)) for lead in (-1, 0, 1)]
        assert by_lead[0] < by_lead[1] < by_lead[2]


def test_deep_catchup_bound():
    assert deep_catchup_bound(0.5, 5) == pytest.approx(1 / 24, abs=1e-12)
    for a in np.arange(0.01, 0.5, 0.01):
        assert deep_catchup_bound(float(a), 5) < 1 / 24
    assert deep_catchup_bound(0.0, 5) == 0.0
    assert deep_catchup_bound(1e-9, 7) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        deep_catchup_bound(0.6, 5)
    with pytest.raises(ValueError):
        deep_catchup_bound(0.4, 4)


def test_monte_carlo_race_matches_d1_probability():
    rng = np.random.default_rng(123)
    interval = 600.0
    params = ChainParams(block_size_limit=1, block_interval=interval)
    for fork_power, shift in [(0.2, 0.0), (0.3, 0.1)]:
        effective = fork_power + shift
        main_rate, fork_rate = chain_rates(effective, params)
        n = 100_000
        fork_times = rng.exponential(1 / fork_rate, n)
        main_times = rng.exponential(1 / main_rate, n)
        freq = float(np.mean(fork_times < main_times))
        assert abs(freq - win_prob_d1(fork_power, shift)) < 0.01


def test_exponential_clock_means():
    rng = np.random.default_rng(7)
    draws = rng.exponential(600.0, 100_000)
    assert 594 <= float(np.mean(draws)) <= 606
    draws_half = rng.exponential(600.0 / 0.5, 100_000)
    assert math.isclose(float(np.mean(draws_half)), 1200.0, rel_tol=0.01)
