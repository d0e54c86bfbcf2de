"""Miner decision logic for fee-based fork races.

Three groups of functions:

* expected-return formulas and the thresholds on the wealth ratio gamma
  (next claimable template vs. the chain head) that make forking the
  head pay better than extending it, for give-up depths 1 and 2;
* rational-miner shifting rules: when to move power onto a fork;
* avoidance crafting: how a miner claims fees so that its own block
  fails every attack condition a conservative adversary could check.

All functions are pure over immutable snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .mempool import (
    EMPTY_TEMPLATE,
    BandwidthSetResult,
    ChainParams,
    MempoolView,
    Transaction,
    bandwidth_set,
    claim_partial,
    gamma_ratio,
    split_equal_fee,
)


class DegenerateRaceError(ValueError):
    """No mining power behind the fork side of a race."""


@dataclass(frozen=True)
class PowerSplit:
    """Global mining-power fractions by behaviour.

    The boundary value ``undercutter == 0.5`` is accepted so the
    analytical formulas can be evaluated at their published limits;
    simulated populations stay strictly below one half.
    """

    undercutter: float
    honest: float
    rational: float

    def __post_init__(self) -> None:
        total = self.undercutter + self.honest + self.rational
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"power fractions must sum to 1, got {total}")
        if not 0.0 <= self.undercutter <= 0.5:
            raise ValueError("undercutter power must lie in [0, 0.5]")
        if self.honest < -1e-12 or self.rational < -1e-12:
            raise ValueError("power fractions must be non-negative")

    @classmethod
    def of(cls, undercutter: float, honest: float) -> "PowerSplit":
        return cls(undercutter=undercutter, honest=honest, rational=1.0 - undercutter - honest)


@dataclass(frozen=True)
class ReturnEstimate:
    """Expected fee income (head-block units) from attacking vs. not."""

    attack_return: float
    baseline_return: float


@dataclass(frozen=True)
class Decision:
    """Outcome of a decision routine, tagged with the branch that fired.

    ``branch`` is the 1-based position in the decision ladder (0 for
    stay); experiments count attack initiations per branch through the
    ``rationale`` tag.
    """

    action: str  # "stay" | "undercut" | "shift"
    branch: int
    rationale: str
    template: BandwidthSetResult | None = None
    target_chain: int | None = None
    fraction: float = 0.0


# ---------------------------------------------------------------------------
# gamma thresholds
# ---------------------------------------------------------------------------


def limited_bound_d1(split: PowerSplit) -> float:
    """Below this ratio the depth-1 attack pays even with no followers."""
    return split.undercutter / (1.0 - split.undercutter)


def join_threshold_d1(split: PowerSplit) -> float:
    """Rational miners join a depth-1 fork when gamma is below this."""
    return split.honest / (1.0 - split.undercutter)


def sufficient_bound_d1(split: PowerSplit) -> float:
    """Depth-1 attack bound when the attacker needs rational followers."""
    ratio = split.undercutter / split.honest if split.honest > 0 else math.inf
    return min(join_threshold_d1(split), ratio)


def limited_bound_d2(split: PowerSplit) -> float:
    """Below this ratio the depth-2 attack pays with no followers."""
    b = split.undercutter
    return b * b / (2.0 * (1.0 - b) ** 2)


def tie_threshold_d2(split: PowerSplit) -> float:
    """Rational endpoint rule for joining a depth-2 fork in a tie.

    At one-half attacker power the comparison holds for every gamma, so
    the threshold degenerates to infinity.
    """
    b, h = split.undercutter, split.honest
    if b >= 0.5:
        return math.inf
    return (h * h / (1.0 - b) + b - h) / (1.0 - 2.0 * b)


def sufficient_bound_d2(split: PowerSplit) -> float:
    """Depth-2 attack bound when rational followers are required."""
    b, h = split.undercutter, split.honest
    with_joiners = b * (1.0 - h) / (1.0 + h - b)
    return min(tie_threshold_d2(split), with_joiners)


# ---------------------------------------------------------------------------
# expected returns
# ---------------------------------------------------------------------------


def expected_returns_d1(split: PowerSplit, gamma: float, delta: float = 0.0) -> ReturnEstimate:
    """Expected attacker income for a depth-1 race, in head-block units.

    ``delta`` is the rational power expected to join the fork.  The
    baseline is what the same miner earns extending the head instead.
    """
    if gamma < 0.0:
        raise ValueError("gamma must be non-negative")
    effective = split.undercutter + delta
    if effective <= 0.0:
        raise DegenerateRaceError("no power behind the fork")
    if effective > 1.0 + 1e-12:
        raise ValueError("undercutter power plus shift exceeds 1")
    attack = (gamma + split.undercutter / effective) * split.undercutter * effective
    baseline = split.undercutter * gamma
    return ReturnEstimate(attack_return=attack, baseline_return=baseline)


def expected_returns_d2(split: PowerSplit, gamma: float) -> ReturnEstimate:
    """Expected attacker income for a depth-2 race, in head-block units."""
    if gamma < 0.0:
        raise ValueError("gamma must be non-negative")
    b = split.undercutter
    if b <= 0.0:
        raise DegenerateRaceError("no power behind the fork")
    attack = b * b * (2.0 * gamma + b) / (1.0 - b * (1.0 - b))
    baseline = 2.0 * b * gamma
    return ReturnEstimate(attack_return=attack, baseline_return=baseline)


# ---------------------------------------------------------------------------
# undercutter decisions
# ---------------------------------------------------------------------------


def undercut_branches_d1(split: PowerSplit, gamma: float, negligible: float) -> tuple[str, int, str]:
    """Depth-1 decision ladder on gamma alone: (action, branch, tag)."""
    if gamma <= negligible:
        return "undercut", 1, "negligible-mempool"
    if gamma < limited_bound_d1(split):
        return "undercut", 2, "limited-mempool"
    if gamma < sufficient_bound_d1(split):
        return "undercut", 3, "sufficient-mempool"
    return "stay", 0, "stay"


def undercut_branches_d2(
    split: PowerSplit, gamma: float, negligible: float, lone_set: bool = False
) -> tuple[str, int, str]:
    """Depth-2 decision ladder: (action, branch, tag).

    ``lone_set`` flags a pool that holds exactly one non-negligible
    bandwidth set; the attack template then splits that set rather than
    claiming it whole.  The branch still requires the attack to pay with
    respect to the head, i.e. gamma below one of the profit bounds.
    """
    if gamma <= negligible:
        return "undercut", 1, "negligible-mempool"
    profitable = gamma < max(limited_bound_d2(split), sufficient_bound_d2(split))
    if lone_set and profitable:
        return "undercut", 2, "lone-set"
    if gamma < limited_bound_d2(split):
        return "undercut", 3, "limited-mempool"
    if gamma < sufficient_bound_d2(split):
        return "undercut", 4, "sufficient-mempool"
    return "stay", 0, "stay"


def one_set_left(pool: MempoolView, params: ChainParams) -> bool:
    """True when removing one bandwidth set leaves only negligible fees."""
    first = bandwidth_set(pool, params)
    if first.total_fee == 0:
        return False
    residual = bandwidth_set(pool.without(first.tx_ids), params).total_fee
    return residual <= params.negligible_fee_threshold * first.total_fee


def _lightest_part(parts: list[list[Transaction]]) -> list[Transaction]:
    return min(parts, key=lambda p: sum(t.fee for t in p))


def undercut_decision_d1(
    split: PowerSplit,
    gamma: float,
    params: ChainParams,
    pool: MempoolView,
    head: Sequence[Transaction],
) -> Decision:
    """Whether and how to fork the current head at give-up depth 1.

    A drained mempool means the attack block takes half of the head
    (equal-fee split, keeping the lighter part so the fork itself cannot
    be undercut); otherwise the attack block is the current bandwidth
    set, leaving the head's fees on the table.
    """
    action, branch, tag = undercut_branches_d1(split, gamma, params.negligible_fee_threshold)
    if action == "stay":
        return Decision("stay", 0, tag)
    if branch == 1:
        template = BandwidthSetResult.from_transactions(
            _lightest_part(split_equal_fee(head, 2, params))
        )
    else:
        template = bandwidth_set(pool, params)
    return Decision("undercut", branch, tag, template=template)


def undercut_decision_d2(
    split: PowerSplit,
    gamma: float,
    params: ChainParams,
    pool: MempoolView,
    head: Sequence[Transaction],
) -> Decision:
    """Whether and how to fork the current head at give-up depth 2."""
    action, branch, tag = undercut_branches_d2(
        split, gamma, params.negligible_fee_threshold, lone_set=one_set_left(pool, params)
    )
    if action == "stay":
        return Decision("stay", 0, tag)
    if branch == 1:
        template = BandwidthSetResult.from_transactions(
            _lightest_part(split_equal_fee(head, 3, params))
        )
    elif branch == 2:
        by_id = {tx.id: tx for tx in pool.pending}
        first = bandwidth_set(pool, params)
        first_txs = [by_id[i] for i in first.tx_ids]
        template = BandwidthSetResult.from_transactions(
            _lightest_part(split_equal_fee(first_txs, 2, params))
        )
    else:
        template = bandwidth_set(pool, params)
    return Decision("undercut", branch, tag, template=template)


# ---------------------------------------------------------------------------
# rational shifting
# ---------------------------------------------------------------------------


def rational_join_d1(split: PowerSplit, gamma: float) -> float:
    """All-or-nothing join rule at a depth-1 tie: 1.0 to join, 0.0 to stay."""
    return 1.0 if gamma < join_threshold_d1(split) else 0.0


def rational_shift_d2_tie(split: PowerSplit, gamma: float) -> float:
    """All-or-nothing join rule at a depth-2 tie.

    The expected-return curve in the shifted fraction is a quadratic
    with positive leading coefficient, so the optimum sits at an
    endpoint; comparing the endpoints reduces to a gamma threshold.
    """
    return 1.0 if gamma < tie_threshold_d2(split) else 0.0


def rational_shift_general(
    state,
    split: PowerSplit,
    depth: int,
    claimable_main: float,
    claimable_fork: float,
    owned_main: float,
    owned_fork: float,
    grid: int = 100,
    movable: float | None = None,
) -> float:
    """Optimal fraction of movable rational power to shift onto the fork.

    ``state`` is any object with ``m``, ``n`` and ``fork_power``
    attributes, oriented so the deciding miner sits on the main side.
    Claimable fees must already be capped at what fits in the blocks
    each side still needs to win.  The objective weighs fees already
    owned and fees still claimable on each side by rough win
    probabilities (power raised to the remaining block count) and by the
    miner's power share on that side.  Maximized over a uniform grid;
    ties resolve toward staying.
    """
    if grid < 1:
        raise ValueError("grid must be positive")
    lead = state.n - state.m
    if abs(lead) >= depth:
        raise ValueError("race already decided: |lead| >= depth")
    fork_power = state.fork_power
    if movable is None:
        movable = max(0.0, 1.0 - fork_power - split.honest)
    movable = min(movable, 1.0 - fork_power)

    def objective(x: float) -> float:
        on_fork = fork_power + x * movable
        on_main = 1.0 - on_fork
        p_fork = on_fork ** (depth - lead)
        p_main = on_main ** (depth + lead)
        stay_share = (1.0 - x) * movable / on_main if on_main > 0.0 else 0.0
        move_share = x * movable / on_fork if on_fork > 0.0 else 0.0
        return (
            owned_main * p_main
            + owned_fork * p_fork
            + claimable_main * stay_share * p_main
            + claimable_fork * move_share * p_fork
        )

    best_x = 0.0
    best_value = objective(0.0)
    for i in range(1, grid + 1):
        x = i / grid
        value = objective(x)
        if value > best_value:
            best_x, best_value = x, value
    return best_x


# ---------------------------------------------------------------------------
# avoidance crafting
# ---------------------------------------------------------------------------


def required_gamma(split: PowerSplit, depth: int, negligible: float) -> float:
    """Smallest post-claim gamma that defeats every attack condition."""
    if depth == 1:
        bound = max(limited_bound_d1(split), sufficient_bound_d1(split))
    else:
        bound = max(limited_bound_d2(split), sufficient_bound_d2(split))
    return max(bound, negligible)


def _claim_defeats_attack(
    template: BandwidthSetResult,
    claim_txs: Sequence[Transaction],
    pool: MempoolView,
    split: PowerSplit,
    params: ChainParams,
) -> bool:
    remaining = pool.without(template.tx_ids)
    gamma_after = gamma_ratio(remaining, template.total_fee, params)
    if undercut_decision_d1(split, gamma_after, params, remaining, claim_txs).action != "stay":
        return False
    return undercut_decision_d2(split, gamma_after, params, remaining, claim_txs).action == "stay"


def _claim_up_to(txs: Sequence[Transaction], target: float, params: ChainParams) -> list[Transaction]:
    # greedy by rate, skipping anything that would burst the fee target
    # or the size limit; unlike claim_partial this walks past an
    # indivisible over-target transaction instead of stopping.
    chosen: list[Transaction] = []
    fee = 0
    room = params.block_size_limit
    for t in txs:
        if t.size <= room and fee + t.fee <= target:
            chosen.append(t)
            fee += t.fee
            room -= t.size
    return chosen


def craft_avoidance_block(
    pool: MempoolView,
    params: ChainParams,
    depth: int = 1,
    assumed_undercutter_power: float = 0.5,
    assumed_honest_power: float = 0.0,
    mode: str = "exact",
    strict_factor: float = 0.8,
) -> BandwidthSetResult:
    """Craft a block that is not worth undercutting.

    ``exact`` searches for the largest claim whose post-claim state
    (recomputed residual bandwidth set against the claimed fee) makes
    both decision ladders stay for the assumed adversary.  The one-half
    adversary default is the conservative worst case.

    ``experimental`` reproduces the cheaper procedure used in the profit
    experiments: derive a target fee from the visible fees in the first
    two bandwidth sets and claim it from the current set without
    recomputing what the leftovers repack into, which can leave the
    condition satisfiable and hands the attacker a small edge.

    ``strict`` scales the experimental target down by ``strict_factor``.

    Whatever the mode, the claim never exceeds the bandwidth-set fee,
    and a pool with nothing claimable yields the empty template (wait).
    """
    if depth not in (1, 2):
        raise ValueError("depth must be 1 or 2")
    if mode not in ("exact", "experimental", "strict"):
        raise ValueError(f"unknown avoidance mode {mode!r}")
    # the assumed adversary plus assumed honest mass cannot exceed 1
    honest = min(assumed_honest_power, 1.0 - assumed_undercutter_power)
    split = PowerSplit.of(assumed_undercutter_power, honest)
    first = bandwidth_set(pool, params)
    if first.total_fee == 0:
        return EMPTY_TEMPLATE
    by_id = {tx.id: tx for tx in pool.pending}
    first_txs = [by_id[i] for i in first.tx_ids]
    lone = one_set_left(pool, params)

    if mode == "exact":
        candidates: list[list[Transaction]] = []
        if depth == 2 and lone:
            candidates.append(_lightest_part(split_equal_fee(first_txs, 2, params)))
        # prefixes keep the densest transactions, suffixes claim around
        # an indivisible wealthy one; take the richest claim that the
        # assumed adversary would not fork.
        candidates.extend(first_txs[:k] for k in range(len(first_txs), 0, -1))
        candidates.extend(first_txs[j:] for j in range(1, len(first_txs)))
        candidates.sort(key=lambda c: -sum(t.fee for t in c))
        for claim in candidates:
            template = BandwidthSetResult.from_transactions(claim)
            if _claim_defeats_attack(template, claim, pool, split, params):
                return template
        return EMPTY_TEMPLATE

    if depth == 2 and lone:
        target = first.total_fee / 2.0
    else:
        residual = bandwidth_set(pool.without(first.tx_ids), params).total_fee
        visible = first.total_fee + residual
        target = visible / (1.0 + required_gamma(split, depth, params.negligible_fee_threshold))
    if mode == "strict":
        target *= strict_factor
    target = min(target, float(first.total_fee))
    return BandwidthSetResult.from_transactions(_claim_up_to(first_txs, int(target), params))
