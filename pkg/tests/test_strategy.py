import math

import numpy as np
import pytest

from undercut.engine import ForkState
from undercut.mempool import ChainParams, MempoolView, bandwidth_set, gamma_ratio
from undercut.strategy import (
    DegenerateRaceError,
    PowerSplit,
    craft_avoidance_block,
    expected_returns_d1,
    expected_returns_d2,
    join_threshold_d1,
    limited_bound_d1,
    limited_bound_d2,
    one_set_left,
    rational_join_d1,
    rational_shift_d2_tie,
    rational_shift_general,
    sufficient_bound_d1,
    sufficient_bound_d2,
    tie_threshold_d2,
    undercut_branches_d1,
    undercut_branches_d2,
    undercut_decision_d1,
    undercut_decision_d2,
)

from conftest import pool_of, tx


def split_of(bu, bh):
    return PowerSplit.of(bu, bh)


def test_power_split_validation():
    with pytest.raises(ValueError):
        PowerSplit(undercutter=0.55, honest=0.2, rational=0.25)
    with pytest.raises(ValueError):
        PowerSplit(undercutter=0.2, honest=0.2, rational=0.2)
    boundary = split_of(0.5, 0.2)  # analysis boundary is allowed
    assert boundary.rational == pytest.approx(0.3)


def test_expected_returns_d1_examples():
    r = expected_returns_d1(split_of(0.2, 0.1), 0.25)
    assert r.attack_return == pytest.approx(0.05)
    assert r.baseline_return == pytest.approx(0.05)
    r = expected_returns_d1(split_of(0.5, 0.2), 1.0)
    assert r.attack_return == pytest.approx(0.5) and r.baseline_return == pytest.approx(0.5)
    r = expected_returns_d1(split_of(0.3, 0.1), 0.0)
    assert r.baseline_return == 0.0
    assert r.attack_return == pytest.approx(0.3**2)
    with pytest.raises(DegenerateRaceError):
        expected_returns_d1(split_of(0.0, 0.5), 0.2)


def test_expected_returns_d2_examples():
    r = expected_returns_d2(split_of(0.5, 0.2), 0.5)
    assert r.attack_return == pytest.approx(0.5) and r.baseline_return == pytest.approx(0.5)
    r = expected_returns_d2(split_of(0.2, 0.1), 0.03)
    assert r.attack_return > r.baseline_return
    assert r.attack_return == pytest.approx(r.baseline_return, rel=0.05)
    r = expected_returns_d2(split_of(0.2, 0.1), 0.0)
    assert r.baseline_return == 0.0 < r.attack_return


def test_thresholds():
    assert limited_bound_d1(split_of(0.2, 0.1)) == pytest.approx(0.25)
    assert limited_bound_d2(split_of(0.5, 0.2)) == pytest.approx(0.5)
    assert limited_bound_d2(split_of(0.3, 0.2)) == pytest.approx(0.09 / 0.98)
    assert sufficient_bound_d1(split_of(0.2, 0.5)) == pytest.approx(0.4)
    assert join_threshold_d1(split_of(0.176, 0.5)) == pytest.approx(0.5 / 0.824)
    assert tie_threshold_d2(split_of(0.5, 0.1)) == math.inf
    assert tie_threshold_d2(split_of(0.3, 0.5)) == pytest.approx((0.25 / 0.7 + 0.3 - 0.5) / 0.4)
    assert sufficient_bound_d2(split_of(0.45, 0.1)) == pytest.approx(0.405 / 0.65)


def test_undercut_branches_d1_examples():
    assert undercut_branches_d1(split_of(0.2, 0.1), 0.2, 0.01)[0:2] == ("undercut", 2)
    assert undercut_branches_d1(split_of(0.2, 0.5), 0.3, 0.01)[0:2] == ("undercut", 3)
    assert undercut_branches_d1(split_of(0.2, 0.5), 0.5, 0.01)[0] == "stay"
    assert undercut_branches_d1(split_of(0.2, 0.5), 0.005, 0.01)[1] == 1


def test_undercut_branches_d2_examples():
    assert undercut_branches_d2(split_of(0.3, 0.2), 0.05, 0.01)[0:2] == ("undercut", 3)
    assert undercut_branches_d2(split_of(0.5, 0.2), 0.4, 0.01)[0:2] == ("undercut", 3)
    assert undercut_branches_d2(split_of(0.45, 0.1), 0.6, 0.01)[0:2] == ("undercut", 4)
    assert undercut_branches_d2(split_of(0.2, 0.3), 0.5, 0.01)[0] == "stay"
    # at one-half power the first sufficient-branch term degenerates and
    # only the second one binds
    assert undercut_branches_d2(split_of(0.5, 0.1), 0.6, 0.01)[0:2] == ("undercut", 4)
    assert undercut_branches_d2(split_of(0.5, 0.1), 0.8, 0.01)[0] == "stay"


def test_undercut_decision_templates():
    params = ChainParams(block_size_limit=10, block_interval=600)
    head = [tx("h1", 1, 6), tx("h2", 1, 4)]
    pool = pool_of(tx("p1", 1, 1))
    d = undercut_decision_d1(split_of(0.2, 0.3), 0.0, params, pool, head)
    assert d.action == "undercut" and d.branch == 1
    assert d.template.total_fee == 4  # lighter half of the head
    d = undercut_decision_d1(split_of(0.2, 0.3), 0.2, params, pool, head)
    assert d.branch == 2 and d.template.tx_ids == ("p1",)

    head3 = [tx("h1", 1, 5), tx("h2", 1, 4), tx("h3", 1, 3)]
    d = undercut_decision_d2(split_of(0.3, 0.3), 0.0, params, pool_of(), head3)
    assert d.branch == 1
    assert d.template.total_fee == 3  # lightest third of the head

    lone_pool = pool_of(tx("a", 1, 6), tx("b", 1, 6))
    gamma = gamma_ratio(lone_pool, 100, params)
    d = undercut_decision_d2(split_of(0.45, 0.1), gamma, params, lone_pool, head)
    assert d.branch == 2 and d.rationale == "lone-set"
    assert d.template.total_fee == 6  # half of the only set left


def test_rational_join_d1_examples():
    assert rational_join_d1(split_of(0.176, 0.5), 0.5) == 1.0
    assert rational_join_d1(split_of(0.2, 0.3), 0.0) == 1.0
    weak_honest = split_of(0.3, 0.1)
    assert rational_join_d1(weak_honest, limited_bound_d1(weak_honest)) == 0.0


def test_rational_shift_d2_tie_examples():
    assert rational_shift_d2_tie(split_of(0.5, 0.2), 100.0) == 1.0
    assert rational_shift_d2_tie(split_of(0.3, 0.5), 0.9) == 0.0
    assert rational_shift_d2_tie(split_of(0.3, 0.5), 0.0) == 1.0


def _tie_objective_endpoint(split, gamma, x):
    # independent evaluation of the depth-2 tie expected-return curve
    bu, bh, br = split.undercutter, split.honest, split.rational
    pm = bu * (1 - bu - x * br) ** 2
    pf = bu * (bu + x * br) * (bu + x * br + bh)
    value = br / (br + bh) * pm if br + bh > 0 else 0.0
    if bh + (1 - x) * br > 0:
        value += (1 - x) * br / (bh + (1 - x) * br) * 2 * gamma * pm
    if x * br + bu > 0:
        value += x * br / (x * br + bu) * gamma * pf
    value += x * br / (x * br + bu + bh) * pf
    return value


def test_tie_rule_matches_endpoint_objective():
    rng = np.random.default_rng(21)
    for _ in range(500):
        bu = float(rng.uniform(0.05, 0.5))
        bh = float(rng.uniform(0.0, 1.0 - bu - 0.05))
        gamma = float(rng.uniform(0.0, 1.2))
        split = split_of(bu, bh)
        expected = 1.0 if _tie_objective_endpoint(split, gamma, 0.0) < _tie_objective_endpoint(
            split, gamma, 1.0
        ) else 0.0
        assert rational_shift_d2_tie(split, gamma) == expected


def test_decision_matches_return_formulas_d1():
    # attack fires exactly when the expected-return gap is positive, with
    # the shift given by the rational join rule
    rng = np.random.default_rng(33)
    for _ in range(1000):
        bu = float(rng.uniform(0.05, 0.499))
        bh = float(rng.uniform(0.0, 1.0 - bu - 0.01))
        gamma = float(rng.uniform(0.0, 1.2))
        split = split_of(bu, bh)
        action, _, _ = undercut_branches_d1(split, gamma, 0.01)
        delta = split.rational * rational_join_d1(split, gamma)
        estimate = expected_returns_d1(split, gamma, delta)
        assert (action == "undercut") == (estimate.attack_return > estimate.baseline_return)


def test_shift_general_trivial_and_dominant_cases():
    state = ForkState(1, 1, (), (), 0.3, 0.0, 0.0, 0.0)
    split = split_of(0.3, 0.2)
    assert rational_shift_general(state, split, 2, 0, 0, 0, 0, grid=3) == 0.0
    assert (
        rational_shift_general(state, split, 2, 10.0, 10.0, 0.0, 500.0, grid=3) == 1.0
    )


def test_shift_general_reduces_to_join_rule_at_depth_one():
    rng = np.random.default_rng(55)
    for _ in range(300):
        bu = float(rng.uniform(0.05, 0.499))
        bh = float(rng.uniform(0.01, 1.0 - bu - 0.02))
        gamma = float(rng.uniform(0.0, 1.2))
        split = split_of(bu, bh)
        state = ForkState(1, 1, (), (), bu, 0.0, 0.0, 0.0)
        x = rational_shift_general(
            state,
            split,
            1,
            claimable_main=gamma,
            claimable_fork=1.0,
            owned_main=split.rational / (1.0 - bu),
            owned_fork=0.0,
            grid=100,
        )
        assert x in (0.0, 1.0)
        assert x == rational_join_d1(split, gamma)


def test_one_set_left():
    params = ChainParams(block_size_limit=4, block_interval=600)
    assert one_set_left(pool_of(tx("a", 2, 50), tx("b", 2, 40)), params)
    assert not one_set_left(pool_of(tx("a", 2, 50), tx("b", 2, 40), tx("c", 2, 30)), params)
    assert not one_set_left(pool_of(), params)


def test_craft_avoidance_wait_on_empty_pool(params):
    assert craft_avoidance_block(pool_of(), params).total_fee == 0
    zero = pool_of(tx("a", 1, 0))
    assert craft_avoidance_block(zero, params).total_fee == 0


def test_craft_avoidance_lone_set_halves():
    params = ChainParams(block_size_limit=10, block_interval=600)
    pool = pool_of(tx("a", 1, 5), tx("b", 1, 5), tx("c", 1, 5), tx("d", 1, 5))
    claim = craft_avoidance_block(pool, params, depth=2, mode="exact")
    assert claim.total_fee == 10  # one of two equal-fee halves


def test_craft_avoidance_experimental_matches_visible_fee_rule():
    # two one-block sets of fees 4 and 2; conservative adversary needs a
    # post-claim ratio of one, so the target claim is half the visible 6
    params = ChainParams(block_size_limit=3, block_interval=600)
    pool = pool_of(
        tx("a", 1, 2), tx("b", 1, 1), tx("c", 1, 1), tx("d", 1, 1), tx("e", 1, 1)
    )
    assert bandwidth_set(pool, params).total_fee == 4
    claim = craft_avoidance_block(pool, params, depth=1, mode="experimental")
    assert claim.total_fee == 3


def test_craft_avoidance_strict_scales_experimental_claim():
    params = ChainParams(block_size_limit=10, block_interval=600)
    txs = [tx(f"a{i}", 1, 1) for i in range(10)] + [tx(f"b{i}", 1, 1) for i in range(6)]
    pool = pool_of(*txs)
    experimental = craft_avoidance_block(pool, params, depth=1, mode="experimental")
    strict = craft_avoidance_block(pool, params, depth=1, mode="strict", strict_factor=0.8)
    assert experimental.total_fee == 8
    assert strict.total_fee == 6  # floor of 0.8 * 8


def test_craft_avoidance_exact_defeats_both_decision_ladders():
    rng = np.random.default_rng(77)
    params = ChainParams(block_size_limit=20, block_interval=600)
    for trial in range(200):
        n = int(rng.integers(1, 13))
        txs = [
            tx(f"t{trial}_{i}", int(rng.integers(1, 6)), int(rng.integers(1, 1000)))
            for i in range(n)
        ]
        pool = pool_of(*txs)
        depth = 1 if trial % 2 else 2
        claim = craft_avoidance_block(pool, params, depth=depth, assumed_honest_power=0.3)
        remaining = pool.without(claim.tx_ids)
        gamma = gamma_ratio(remaining, claim.total_fee, params)
        head = [t for t in txs if t.id in claim.tx_ids]
        split = split_of(0.5, 0.3)
        assert undercut_decision_d1(split, gamma, params, remaining, head).action == "stay"
        assert undercut_decision_d2(split, gamma, params, remaining, head).action == "stay"


def test_craft_avoidance_never_exceeds_bandwidth_set_fee():
    rng = np.random.default_rng(99)
    params = ChainParams(block_size_limit=15, block_interval=600)
    for trial in range(150):
        n = int(rng.integers(1, 12))
        txs = [
            tx(f"t{trial}_{i}", int(rng.integers(1, 6)), int(rng.integers(0, 500)))
            for i in range(n)
        ]
        pool = pool_of(*txs)
        cap = bandwidth_set(pool, params).total_fee
        for mode in ("exact", "experimental", "strict"):
            claim = craft_avoidance_block(pool, params, depth=2, mode=mode)
            assert claim.total_fee <= cap
            assert claim.total_size <= params.block_size_limit


@pytest.fixture
def params():
    return ChainParams(block_size_limit=100, block_interval=600.0)
