"""Event-driven simulation of fee-based mining with an undercutting miner.

One run replays a transaction trace through a population of honest,
rational and undercutting miners.  Each event is a block discovery: the
chain with the earliest sampled discovery time extends, a worker on it
is drawn by power, the block template follows the owner's strategy, and
every miner then re-evaluates which chain to work on.  Competing chains
die once the leader is the give-up depth ahead of them, and earnings
settle from the blocks of the single surviving chain.

Runs are deterministic per seed; independent runs share nothing mutable.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .mempool import (
    BandwidthSetResult,
    ChainParams,
    MempoolView,
    Transaction,
    bandwidth_set,
    claimable_fees,
    gamma_ratio,
    selection_key,
)
from .probability import chain_rates
from .strategy import (
    PowerSplit,
    craft_avoidance_block,
    rational_join_d1,
    rational_shift_d2_tie,
    rational_shift_general,
    undercut_decision_d1,
    undercut_decision_d2,
)

# Consecutive zero-fee blocks after the trace is consumed before a run
# is declared stuck on unclaimable dust.
STAGNATION_LIMIT = 8


class StalledSimulationError(RuntimeError):
    """No live chain can produce another block."""


@dataclass(frozen=True)
class Block:
    """A published block: owner, claimed transactions, position."""

    owner: str
    tx_ids: tuple[str, ...]
    fee_total: int
    size_total: int
    creation_time: float
    height: int


@dataclass(frozen=True)
class MinerProfile:
    """Mining power plus behavioural kind; earnings live in RunResult."""

    id: str
    power: float
    kind: str  # "honest" | "rational" | "undercutter"

    def __post_init__(self) -> None:
        if self.kind not in ("honest", "rational", "undercutter"):
            raise ValueError(f"unknown miner kind {self.kind!r}")
        if self.power < 0.0:
            raise ValueError("power must be non-negative")


@dataclass(frozen=True)
class ForkState:
    """Race snapshot: relative heights, block fees, power and rates."""

    m: int
    n: int
    fees_main: tuple[int, ...]
    fees_fork: tuple[int, ...]
    fork_power: float
    shift_delta: float
    rate_main: float
    rate_fork: float


@dataclass(frozen=True)
class AvoidancePolicy:
    """How block builders restrain their fee claims.

    ``assumed_undercutter`` is the adversary power the defense is sized
    against; one half is the conservative ceiling.
    """

    mode: str  # "experimental" | "exact" | "strict"
    factor: float = 0.8
    assumed_undercutter: float = 0.5

    def label(self) -> str:
        return f"strict:{self.factor:g}" if self.mode == "strict" else self.mode


def parse_avoidance(text: str) -> AvoidancePolicy | None:
    """Parse an avoidance flag: off | experimental | exact | strict=<f>."""
    text = text.strip()
    if text == "off":
        return None
    if text in ("experimental", "exact"):
        return AvoidancePolicy(mode=text)
    for sep in ("=", ":"):
        if text.startswith(f"strict{sep}"):
            return AvoidancePolicy(mode="strict", factor=float(text.split(sep, 1)[1]))
    if text == "strict":
        return AvoidancePolicy(mode="strict")
    raise ValueError(f"unknown avoidance setting {text!r}")


@dataclass
class RunResult:
    """Terminal accounting of one seeded run."""

    earnings: dict[str, int]
    confirmed_fee: int
    total_trace_fee: int
    blocks: int
    attacks: int
    attack_branches: dict[str, int]
    fork_wins: int
    fork_losses: int
    seed: int

    def share(self, miner_id: str) -> float:
        if self.confirmed_fee == 0:
            return 0.0
        return self.earnings.get(miner_id, 0) / self.confirmed_fee

    def shares(self) -> dict[str, float]:
        return {mid: self.share(mid) for mid in self.earnings}


class Chain:
    """One live chain: blocks since genesis plus its own pool view.

    The pool is kept as a fee-rate-sorted list (plus an id set) so block
    templates never re-sort; a chain's pending set is always the global
    arrivals minus what this chain has confirmed.
    """

    __slots__ = (
        "seq",
        "blocks",
        "sorted_txs",
        "pending_ids",
        "consumed",
        "workers",
        "next_time",
        "committed",
        "base_height",
        "target_fee",
    )

    def __init__(self, seq: int, blocks: list[Block], workers: set[str]):
        self.seq = seq
        self.blocks = blocks
        self.sorted_txs: list[Transaction] = []
        self.pending_ids: set[str] = set()
        self.consumed: set[str] = set()
        self.workers = workers
        self.next_time = math.inf
        self.committed: BandwidthSetResult | None = None
        self.base_height = 0  # fork point height; 0 for the original chain
        self.target_fee = 0  # fee of the block this chain was forked to undercut

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def add_pending(self, tx: Transaction) -> None:
        if tx.id in self.pending_ids or tx.id in self.consumed:
            return
        bisect.insort(self.sorted_txs, tx, key=selection_key)
        self.pending_ids.add(tx.id)

    def remove_pending(self, tx_ids: Iterable[str]) -> None:
        gone = set(tx_ids)
        if not gone:
            return
        self.sorted_txs = [tx for tx in self.sorted_txs if tx.id not in gone]
        self.pending_ids -= gone
        self.consumed |= gone

    def view(self) -> MempoolView:
        return MempoolView(pending=tuple(self.sorted_txs), presorted=True)

    def worker_power(self, powers: dict[str, float]) -> float:
        return sum(powers[w] for w in self.workers)


# ---------------------------------------------------------------------------
# event primitives
# ---------------------------------------------------------------------------


def next_chain_to_extend(chains: Sequence[Chain]) -> Chain:
    """The chain whose next block comes first; older chain wins ties."""
    best = None
    for chain in chains:
        if chain.next_time == math.inf:
            continue
        if best is None or chain.next_time < best.next_time:
            best = chain
        elif chain.next_time == best.next_time and chain.seq < best.seq:
            best = chain
    if best is None:
        raise StalledSimulationError("no chain with mining power can extend")
    return best


def select_next_block_miner(chain: Chain, powers: dict[str, float], rng: np.random.Generator) -> str:
    """Draw the block owner among the chain's workers, weighted by power."""
    workers = sorted(chain.workers)
    if not workers:
        raise StalledSimulationError("chain has no workers")
    total = sum(powers[w] for w in workers)
    if total <= 0.0:
        raise StalledSimulationError("chain workers have no power")
    u = rng.random() * total
    cum = 0.0
    for w in workers:
        cum += powers[w]
        if u < cum:
            return w
    return workers[-1]


def sample_next_block_time(
    worker_power: float, now: float, params: ChainParams, rng: np.random.Generator
) -> float:
    """Next discovery time for a chain worked by ``worker_power``.

    Power splitting thins the block process, so each chain sees its own
    exponential clock with mean interval / power.
    """
    if worker_power <= 0.0:
        raise StalledSimulationError("cannot sample block time with zero power")
    return now + rng.exponential(params.block_interval / worker_power)


def fork_state(main: Chain, fork: Chain, powers: dict[str, float], params: ChainParams) -> ForkState:
    """Assemble the race snapshot the strategy layer reasons over."""
    base = fork.base_height
    fork_power = fork.worker_power(powers)
    rate_main, rate_fork = chain_rates(fork_power, params)
    return ForkState(
        m=main.tip.height - base,
        n=fork.tip.height - base,
        fees_main=tuple(b.fee_total for b in main.blocks if b.height > base),
        fees_fork=tuple(b.fee_total for b in fork.blocks if b.height > base),
        fork_power=fork_power,
        shift_delta=0.0,
        rate_main=rate_main,
        rate_fork=rate_fork,
    )


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


class Simulation:
    def __init__(
        self,
        trace: Sequence[Transaction],
        miners: Sequence[MinerProfile],
        params: ChainParams,
        depth: int = 1,
        avoidance: AvoidancePolicy | None = None,
        seed: int = 0,
    ):
        if depth not in (1, 2):
            raise ValueError("depth must be 1 or 2")
        total_power = sum(m.power for m in miners)
        if abs(total_power - 1.0) > 1e-9:
            raise ValueError(f"miner powers must sum to 1, got {total_power}")
        undercutters = [m for m in miners if m.kind == "undercutter"]
        if len(undercutters) > 1:
            raise ValueError("at most one undercutter")

        self.params = params
        self.depth = depth
        self.avoidance = avoidance
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.miners = {m.id: m for m in miners}
        self.powers = {m.id: m.power for m in miners}
        self.undercutter_id = undercutters[0].id if undercutters else None
        honest = sum(m.power for m in miners if m.kind == "honest")
        beta_u = undercutters[0].power if undercutters else 0.0
        self.split = PowerSplit.of(beta_u, honest)
        self.by_id = {tx.id: tx for tx in trace}
        if len(self.by_id) != len(trace):
            raise ValueError("duplicate transaction ids in trace")
        self.trace = sorted(trace, key=lambda tx: (tx.arrival_time, tx.id))
        self.total_trace_fee = sum(tx.fee for tx in self.trace)
        self.next_arrival = 0

        t0 = self.trace[0].arrival_time if self.trace else 0.0
        genesis = Block(owner="", tx_ids=(), fee_total=0, size_total=0, creation_time=t0, height=0)
        main = Chain(seq=0, blocks=[genesis], workers={m.id for m in miners})
        self.chains: list[Chain] = [main]
        self.chain_seq = 1
        self.fork: Chain | None = None
        self.clock = t0
        self.attacks = 0
        self.attack_branches: Counter[str] = Counter()
        self.fork_wins = 0
        self.fork_losses = 0
        self.stagnant_blocks = 0
        self._resample(t0)

    # -- event loop --------------------------------------------------------

    def run(self) -> RunResult:
        while not self._drained():
            chain = next_chain_to_extend(self.chains)
            now = chain.next_time
            miner_id = select_next_block_miner(chain, self.powers, self.rng)
            block = self.publish_block(miner_id, chain, now)
            self.update_chains(chain, block)
            # Arrivals land before miners re-decide: a decision made at
            # the event time sees everything that arrived before it.
            # Block templates still lag one window, as published blocks
            # are cut from the pool of the previous event.
            self.update_mempool(now)
            self.update_miners(chain, block)
            self.clock = now
            self._resample(now)
        return self._settle()

    def _drained(self) -> bool:
        if self.next_arrival < len(self.trace) or len(self.chains) > 1:
            return False
        chain = self.chains[0]
        claimable = bandwidth_set(chain.view(), self.params).total_fee
        if claimable == 0:
            return True
        head_fee = chain.tip.fee_total
        if head_fee > 0 and claimable <= self.params.negligible_fee_threshold * head_fee:
            return True
        # Unclaimable dust: deterministic strategies over a static pool
        # keep publishing empty blocks; cut the run after a few.
        return self.stagnant_blocks >= STAGNATION_LIMIT

    def _settle(self) -> RunResult:
        terminal = self.chains[0]
        earnings = {mid: 0 for mid in self.miners}
        confirmed = 0
        for block in terminal.blocks:
            if block.owner:
                earnings[block.owner] += block.fee_total
            confirmed += block.fee_total
        return RunResult(
            earnings=earnings,
            confirmed_fee=confirmed,
            total_trace_fee=self.total_trace_fee,
            blocks=len(terminal.blocks) - 1,
            attacks=self.attacks,
            attack_branches=dict(self.attack_branches),
            fork_wins=self.fork_wins,
            fork_losses=self.fork_losses,
            seed=self.seed,
        )

    # -- per-event steps ----------------------------------------------------

    def publish_block(self, miner_id: str, chain: Chain, now: float) -> Block:
        """Build the owner's template, publish it, and consume its txs."""
        if chain is self.fork and chain.committed is not None:
            template = chain.committed
            chain.committed = None
            kept = tuple(i for i in template.tx_ids if i in chain.pending_ids)
            if len(kept) != len(template.tx_ids):
                template = BandwidthSetResult.from_transactions([self.by_id[i] for i in kept])
        elif self.avoidance is not None:
            template = craft_avoidance_block(
                chain.view(),
                self.params,
                depth=self.depth,
                assumed_undercutter_power=self.avoidance.assumed_undercutter,
                assumed_honest_power=self.split.honest,
                mode=self.avoidance.mode,
                strict_factor=self.avoidance.factor,
            )
        else:
            template = bandwidth_set(chain.view(), self.params)
        block = Block(
            owner=miner_id,
            tx_ids=template.tx_ids,
            fee_total=template.total_fee,
            size_total=template.total_size,
            creation_time=now,
            height=chain.tip.height + 1,
        )
        chain.remove_pending(template.tx_ids)
        if self.next_arrival >= len(self.trace) and len(self.chains) == 1:
            self.stagnant_blocks = self.stagnant_blocks + 1 if block.fee_total == 0 else 0
        return block

    def update_chains(self, ext: Chain, block: Block) -> None:
        """Append the block and drop chains the leader has outrun."""
        ext.blocks.append(block)
        survivors = []
        for chain in self.chains:
            if chain is ext or ext.tip.height - chain.tip.height < self.depth:
                survivors.append(chain)
                continue
            ext.workers |= chain.workers
            if chain is self.fork:
                self.fork_losses += 1
                self.fork = None
            elif self.fork is ext:
                self.fork_wins += 1
                self.fork = None
        self.chains = survivors

    def update_miners(self, ext: Chain, block: Block) -> None:
        """Re-evaluate every miner's working chain after a block event."""
        # Undercutter: consider forking the fresh head (never its own
        # block, never while an attack is live, never an empty head).
        if (
            self.undercutter_id is not None
            and self.fork is None
            and block.owner != self.undercutter_id
            and block.fee_total > 0
        ):
            self._consider_attack(ext, block)

        if self.fork is None or len(self.chains) < 2:
            return
        fork = self.fork
        main = next(c for c in self.chains if c is not fork)

        # Honest miners: longest chain, first-seen on ties.
        other = main if ext is fork else fork
        movers = [
            w
            for w in sorted(other.workers)
            if self.miners[w].kind == "honest" and ext.tip.height > other.tip.height
        ]
        for mid in movers:
            other.workers.discard(mid)
            ext.workers.add(mid)

        # Rational miners not on the extended chain, strongest first.
        candidates = sorted(
            (
                w
                for w in other.workers
                if self.miners[w].kind == "rational" and w != self.undercutter_id
            ),
            key=lambda w: (-self.powers[w], w),
        )
        for mid in candidates:
            if self._rational_joins(mid, ext, other, main, fork):
                other.workers.discard(mid)
                ext.workers.add(mid)

    def _consider_attack(self, ext: Chain, block: Block) -> None:
        pool = ext.view()
        gamma = gamma_ratio(pool, block.fee_total, self.params)
        head_txs = [self.by_id[i] for i in block.tx_ids]
        if self.depth == 1:
            decision = undercut_decision_d1(self.split, gamma, self.params, pool, head_txs)
        else:
            decision = undercut_decision_d2(self.split, gamma, self.params, pool, head_txs)
        if decision.action != "undercut":
            return
        self.attacks += 1
        self.attack_branches[decision.rationale] += 1
        fork = Chain(seq=self.chain_seq, blocks=ext.blocks[:-1].copy(), workers={self.undercutter_id})
        self.chain_seq += 1
        fork.base_height = block.height - 1
        fork.target_fee = block.fee_total
        fork.consumed = ext.consumed - set(block.tx_ids)
        fork.sorted_txs = ext.sorted_txs.copy()
        fork.pending_ids = ext.pending_ids.copy()
        for tx_id in block.tx_ids:
            fork.add_pending(self.by_id[tx_id])
        fork.committed = decision.template
        ext.workers.discard(self.undercutter_id)
        self.fork = fork
        self.chains.append(fork)

    def _rational_joins(self, miner_id: str, ext: Chain, mine: Chain, main: Chain, fork: Chain) -> bool:
        """Would this miner move its whole power onto the extended chain?"""
        base = fork.base_height
        tie_at_one = main.tip.height - base == 1 and fork.tip.height - base == 1
        if self.depth == 1:
            if ext is not fork or not tie_at_one:
                return False
            gamma = gamma_ratio(main.view(), fork.target_fee, self.params)
            return rational_join_d1(self.split, gamma) == 1.0
        if ext is fork and tie_at_one:
            gamma = gamma_ratio(main.view(), fork.target_fee, self.params)
            return rational_shift_d2_tie(self.split, gamma) == 1.0
        # General state: endpoint evaluation of the shift objective with
        # this miner's own power as the movable mass (all-or-nothing).
        lead = ext.tip.height - mine.tip.height
        if abs(lead) >= self.depth:
            return False
        state = ForkState(
            m=mine.tip.height - base,
            n=ext.tip.height - base,
            fees_main=(),
            fees_fork=(),
            fork_power=ext.worker_power(self.powers),
            shift_delta=0.0,
            rate_main=0.0,
            rate_fork=0.0,
        )
        x = rational_shift_general(
            state,
            self.split,
            self.depth,
            claimable_main=claimable_fees(mine.view(), self.params, self.depth + lead),
            claimable_fork=claimable_fees(ext.view(), self.params, self.depth - lead),
            owned_main=self._owned_after_fork(miner_id, mine),
            owned_fork=self._owned_after_fork(miner_id, ext),
            grid=1,
            movable=self.powers[miner_id],
        )
        return x >= 1.0

    def _owned_after_fork(self, miner_id: str, chain: Chain) -> int:
        base = self.fork.base_height if self.fork is not None else chain.base_height
        return sum(b.fee_total for b in chain.blocks if b.height > base and b.owner == miner_id)

    def update_mempool(self, now: float) -> None:
        """Feed arrivals up to the event time into every live chain."""
        while self.next_arrival < len(self.trace) and self.trace[self.next_arrival].arrival_time <= now:
            tx = self.trace[self.next_arrival]
            self.next_arrival += 1
            for chain in self.chains:
                chain.add_pending(tx)

    def _resample(self, now: float) -> None:
        # Exponential clocks are memoryless, so redrawing every live
        # chain after each event (powers may have shifted) matches the
        # thinned-rate model exactly.
        for chain in self.chains:
            power = chain.worker_power(self.powers)
            if power > 0.0:
                chain.next_time = sample_next_block_time(power, now, self.params, self.rng)
            else:
                chain.next_time = math.inf


def profiles(entries: Iterable[tuple[str, float, str]]) -> list[MinerProfile]:
    """MinerProfile list from (id, power, kind) rows."""
    return [MinerProfile(id=mid, power=power, kind=kind) for mid, power, kind in entries]


def run(
    trace: Sequence[Transaction],
    miners: Sequence[MinerProfile],
    params: ChainParams,
    depth: int = 1,
    avoidance: AvoidancePolicy | None = None,
    seed: int = 0,
) -> RunResult:
    """One seeded simulation; see Simulation for the event semantics."""
    return Simulation(trace, miners, params, depth=depth, avoidance=avoidance, seed=seed).run()
