"""Unconfirmed-transaction pools and fee-weighted block template selection.

The central object is the "bandwidth set": the subset of pending
transactions that maximizes total fees while fitting the block size
limit.  Everything that crafts a block (honest packing, attack
templates, avoidance claims) goes through the helpers here.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field
from typing import Iterable, Sequence


class InstanceTooLargeError(ValueError):
    """Exact selection requested on a pool too big to enumerate."""


class InvalidCandidateError(ValueError):
    """Candidate set references transactions not in the pool, or oversized."""


class UnsplittableError(ValueError):
    """No greedy assignment order fits every part under the size limit."""


# Exhaustive selection is only allowed up to this many transactions.
EXACT_SELECTION_LIMIT = 25


@dataclass(frozen=True)
class Transaction:
    """One fee-bearing transaction: the atom of pools and blocks.

    Fees are integers in base currency units (satoshi / piconero scale)
    so that conservation checks never see floating-point drift.  Sizes
    are integers in whatever unit the trace declares (bytes or weight
    units), one convention per trace.
    """

    id: str
    arrival_time: float
    size: int
    fee: int

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ValueError(f"transaction {self.id!r}: size must be positive, got {self.size}")
        if self.fee < 0:
            raise ValueError(f"transaction {self.id!r}: fee must be non-negative, got {self.fee}")

    @property
    def fee_rate(self) -> float:
        return self.fee / self.size


@dataclass(frozen=True)
class ChainParams:
    """Chain-level constants: block size limit, target interval, negligible bound."""

    block_size_limit: int
    block_interval: float
    negligible_fee_threshold: float = 0.01

    def __post_init__(self) -> None:
        if self.block_size_limit <= 0:
            raise ValueError("block_size_limit must be positive")
        if self.block_interval <= 0:
            raise ValueError("block_interval must be positive")
        if not 0.0 <= self.negligible_fee_threshold < 1.0:
            raise ValueError("negligible_fee_threshold must lie in [0, 1)")


def selection_key(tx: Transaction) -> tuple:
    """Total order used everywhere a template is packed greedily.

    Highest fee rate first; ties broken by higher absolute fee, then by
    id, so replays are deterministic.
    """
    return (-tx.fee_rate, -tx.fee, tx.id)


@dataclass(frozen=True)
class MempoolView:
    """Immutable snapshot of one chain's unconfirmed transaction set.

    Pending transactions are held in selection order.  ``presorted``
    skips the normalization pass for callers (the simulation engine)
    that maintain that order themselves.
    """

    pending: tuple[Transaction, ...] = ()
    consumed_ids: frozenset[str] = field(default_factory=frozenset)
    presorted: InitVar[bool] = False

    def __post_init__(self, presorted: bool) -> None:
        if presorted:
            return
        pending = tuple(sorted(self.pending, key=selection_key))
        object.__setattr__(self, "pending", pending)
        ids = [tx.id for tx in pending]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate transaction ids in pending set")
        overlap = set(ids) & self.consumed_ids
        if overlap:
            raise ValueError(f"transactions both pending and consumed: {sorted(overlap)[:3]}")

    @property
    def fee_total(self) -> int:
        return sum(tx.fee for tx in self.pending)

    def ids(self) -> frozenset[str]:
        return frozenset(tx.id for tx in self.pending)

    def without(self, tx_ids: Iterable[str]) -> "MempoolView":
        """Pool after the given transactions were mined on this chain."""
        gone = frozenset(tx_ids)
        return MempoolView(
            pending=tuple(tx for tx in self.pending if tx.id not in gone),
            consumed_ids=self.consumed_ids | gone,
            presorted=True,
        )


@dataclass(frozen=True)
class BandwidthSetResult:
    """A block template: selected ids plus fee/size totals.

    ``tx_ids`` preserves selection order (fee-rate descending for the
    greedy path), which callers use to carve prefixes off a template.
    """

    tx_ids: tuple[str, ...]
    total_fee: int
    total_size: int
    exact: bool = False

    @staticmethod
    def from_transactions(txs: Sequence[Transaction], exact: bool = False) -> "BandwidthSetResult":
        return BandwidthSetResult(
            tx_ids=tuple(tx.id for tx in txs),
            total_fee=sum(tx.fee for tx in txs),
            total_size=sum(tx.size for tx in txs),
            exact=exact,
        )


EMPTY_TEMPLATE = BandwidthSetResult(tx_ids=(), total_fee=0, total_size=0)


def _greedy_pack(txs: Sequence[Transaction], size_budget: int) -> list[Transaction]:
    # txs must already be in selection order; first-fit, skipping what
    # does not fit the remaining budget.
    chosen: list[Transaction] = []
    room = size_budget
    for tx in txs:
        if tx.size <= room:
            chosen.append(tx)
            room -= tx.size
            if room == 0:
                break
    return chosen


def _exact_best_subset(txs: Sequence[Transaction], limit: int) -> list[Transaction]:
    # Meet-in-the-middle over the power set: exhaustive, deterministic,
    # and fast enough for the 25-transaction cap.
    txs = sorted(txs, key=selection_key)
    half = len(txs) // 2
    left, right = txs[:half], txs[half:]

    def enumerate_side(side: Sequence[Transaction]) -> list[tuple[int, int, int]]:
        out = []
        for mask in range(1 << len(side)):
            size = fee = 0
            for i, tx in enumerate(side):
                if mask >> i & 1:
                    size += tx.size
                    fee += tx.fee
            if size <= limit:
                out.append((size, fee, mask))
        return out

    left_sets = enumerate_side(left)
    right_sets = enumerate_side(right)
    # For each size, keep the best right-side fee at or below it.
    right_sets.sort(key=lambda t: (t[0], -t[1], t[2]))
    best_by_size: list[tuple[int, int, int]] = []
    best_fee = -1
    for size, fee, mask in right_sets:
        if fee > best_fee:
            best_fee = fee
            best_by_size.append((size, fee, mask))

    import bisect

    sizes = [t[0] for t in best_by_size]
    best = (-1, 0, 0)  # fee, left mask, right mask
    for size, fee, mask in left_sets:
        idx = bisect.bisect_right(sizes, limit - size) - 1
        if idx < 0:
            continue
        _, rfee, rmask = best_by_size[idx]
        if fee + rfee > best[0]:
            best = (fee + rfee, mask, rmask)
    _, lmask, rmask = best
    chosen = [tx for i, tx in enumerate(left) if lmask >> i & 1]
    chosen += [tx for i, tx in enumerate(right) if rmask >> i & 1]
    return sorted(chosen, key=selection_key)


def bandwidth_set(pool: MempoolView, params: ChainParams, mode: str = "greedy") -> BandwidthSetResult:
    """Select a maximum-fee template fitting the block size limit.

    ``greedy`` sorts by fee rate and packs first-fit: what real miners
    run, and what the simulation engine uses.  ``exact`` enumerates
    subsets and is intended for oracle testing only; it refuses pools
    above EXACT_SELECTION_LIMIT transactions.
    """
    if mode == "greedy":
        chosen = _greedy_pack(pool.pending, params.block_size_limit)
        return BandwidthSetResult.from_transactions(chosen, exact=False)
    if mode == "exact":
        if len(pool.pending) > EXACT_SELECTION_LIMIT:
            raise InstanceTooLargeError(
                f"exact selection limited to {EXACT_SELECTION_LIMIT} transactions, "
                f"pool has {len(pool.pending)}"
            )
        chosen = _exact_best_subset(pool.pending, params.block_size_limit)
        return BandwidthSetResult.from_transactions(chosen, exact=True)
    raise ValueError(f"unknown selection mode {mode!r}")


def is_near_bandwidth_set(
    candidate: Iterable[str],
    pool: MempoolView,
    params: ChainParams,
    proportion: float,
) -> bool:
    """True when a size-feasible subset carries at least ``proportion`` of
    the exact bandwidth set's fees (measured on the overlap).

    Diagnostic predicate only; no decision logic depends on it, and no
    default proportion is baked in.
    """
    if not 0.0 < proportion <= 1.0:
        raise ValueError("proportion must lie in (0, 1]")
    candidate_ids = frozenset(candidate)
    by_id = {tx.id: tx for tx in pool.pending}
    unknown = candidate_ids - by_id.keys()
    if unknown:
        raise InvalidCandidateError(f"candidate ids not in pool: {sorted(unknown)[:3]}")
    cand_size = sum(by_id[i].size for i in candidate_ids)
    if cand_size > params.block_size_limit:
        raise InvalidCandidateError(
            f"candidate size {cand_size} exceeds block size limit {params.block_size_limit}"
        )
    reference = bandwidth_set(pool, params, mode="exact")
    overlap_fee = sum(by_id[i].fee for i in candidate_ids & set(reference.tx_ids))
    return overlap_fee >= proportion * reference.total_fee


def gamma_ratio(pool: MempoolView, head_block_fee: int, params: ChainParams) -> float:
    """Wealth ratio of the next claimable template to the chain head block.

    Returns ``inf`` when the head carries no fees but the pool does, and
    0.0 when nothing claimable remains.
    """
    if head_block_fee < 0:
        raise ValueError("head_block_fee must be non-negative")
    next_fee = bandwidth_set(pool, params).total_fee
    if next_fee == 0:
        return 0.0
    if head_block_fee == 0:
        return float("inf")
    return next_fee / head_block_fee


def split_equal_fee(
    txs: Iterable[Transaction], k: int, params: ChainParams
) -> list[list[Transaction]]:
    """Partition transactions into ``k`` fee-balanced, size-feasible parts.

    Longest-processing-time heuristic: assign in descending fee order to
    the currently lightest part that still fits the size limit.  Falls
    back to a size-descending pass before giving up.
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    txs = list(txs)

    def attempt(order: list[Transaction]) -> list[list[Transaction]] | None:
        parts: list[list[Transaction]] = [[] for _ in range(k)]
        fees = [0] * k
        sizes = [0] * k
        for tx in order:
            placed = False
            for j in sorted(range(k), key=lambda j: (fees[j], j)):
                if sizes[j] + tx.size <= params.block_size_limit:
                    parts[j].append(tx)
                    fees[j] += tx.fee
                    sizes[j] += tx.size
                    placed = True
                    break
            if not placed:
                return None
        return parts

    for order in (
        sorted(txs, key=lambda t: (-t.fee, t.id)),
        sorted(txs, key=lambda t: (-t.size, t.id)),
    ):
        parts = attempt(order)
        if parts is not None:
            return parts
    raise UnsplittableError(f"cannot split {len(txs)} transactions into {k} parts under the size limit")


def claim_partial(pool: MempoolView, target_fee: int, params: ChainParams) -> BandwidthSetResult:
    """Claim the top of the fee-rate order without exceeding ``target_fee``.

    Walks transactions best-rate first and stops at the first one whose
    fee would push the claim past the target; transactions that do not
    fit the size budget are skipped rather than stopping the walk.
    """
    if target_fee < 0:
        raise ValueError("target_fee must be non-negative")
    chosen: list[Transaction] = []
    fee = 0
    room = params.block_size_limit
    for tx in pool.pending:
        if tx.size > room:
            continue
        if fee + tx.fee > target_fee:
            break
        chosen.append(tx)
        fee += tx.fee
        room -= tx.size
    return BandwidthSetResult.from_transactions(chosen)


def claimable_fees(pool: MempoolView, params: ChainParams, blocks: int) -> int:
    """Fees reachable by greedy packing within ``blocks`` block size limits.

    Single budget of ``blocks * block_size_limit``: the horizon a miner
    weighs when deciding which side of a fork can still pay it.
    """
    if blocks <= 0:
        return 0
    chosen = _greedy_pack(pool.pending, blocks * params.block_size_limit)
    return sum(tx.fee for tx in chosen)
