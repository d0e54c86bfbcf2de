"""Transaction traces and mining-power populations.

Traces are flat files of (id, timestamp, size, fee) rows, pre-extracted
from a chain by whatever collection script the user runs; reconstructed
pools are only as faithful as that extraction.  Synthetic traces cover
desk-scale testing.  Presets carry the standard populations: a 16-pool
Bitcoin distribution anchored at 0.6% and 17.6%, a hypothetical strong
attacker at 45%, and a Monero-style 35% attacker.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mempool import ChainParams, Transaction

MINER_KINDS = ("honest", "rational", "undercutter")


class TraceError(ValueError):
    """Malformed trace or power file; message carries the line number."""


@dataclass(frozen=True)
class PowerDistribution:
    """Mining-power population: (miner id, power, kind) entries."""

    entries: tuple[tuple[str, float, str], ...]

    def __post_init__(self) -> None:
        total = sum(p for _, p, _ in self.entries)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"powers must sum to 1, got {total}")
        ids = [mid for mid, _, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate miner ids")
        for mid, power, kind in self.entries:
            if kind not in MINER_KINDS:
                raise ValueError(f"miner {mid!r}: unknown kind {kind!r}")
            if power < 0.0:
                raise ValueError(f"miner {mid!r}: negative power")
        undercutters = [(mid, p) for mid, p, k in self.entries if k == "undercutter"]
        if len(undercutters) != 1:
            raise ValueError("exactly one undercutter required")
        if undercutters[0][1] >= 0.5:
            raise ValueError("undercutter power must be below 0.5")

    @property
    def undercutter_power(self) -> float:
        return next(p for _, p, k in self.entries if k == "undercutter")

    def fraction(self, kind: str) -> float:
        return sum(p for _, p, k in self.entries if k == kind)

    def with_honest_fraction(self, fraction: float) -> "PowerDistribution":
        """Reassign non-undercutter miners so honest power approximates
        ``fraction`` of the total.

        Greedy pick in descending power order; the undercutter keeps its
        role.  With discrete pools the target is met only approximately.
        """
        if not 0.0 <= fraction <= 1.0 - self.undercutter_power + 1e-9:
            raise ValueError("honest fraction plus undercutter power exceeds 1")
        others = sorted(
            ((mid, p) for mid, p, k in self.entries if k != "undercutter"),
            key=lambda e: (-e[1], e[0]),
        )
        honest_ids = set()
        assigned = 0.0
        for mid, power in others:
            if assigned + power <= fraction + 1e-9:
                honest_ids.add(mid)
                assigned += power
        entries = tuple(
            (mid, p, "undercutter" if k == "undercutter" else ("honest" if mid in honest_ids else "rational"))
            for mid, p, k in self.entries
        )
        return PowerDistribution(entries)

    def all_honest(self) -> tuple[tuple[str, float, str], ...]:
        """The same powers with every miner behaving honestly (baselines)."""
        return tuple((mid, p, "honest") for mid, p, _ in self.entries)


# ---------------------------------------------------------------------------
# file io
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ("id", "timestamp", "size", "fee")


def _record(line_no: int, id_: str, timestamp, size, fee) -> Transaction:
    try:
        timestamp = float(timestamp)
        size = int(size)
        fee = int(fee)
    except (TypeError, ValueError) as exc:
        raise TraceError(f"line {line_no}: malformed row: {exc}") from None
    if size <= 0:
        raise TraceError(f"line {line_no}: size must be positive, got {size}")
    if fee < 0:
        raise TraceError(f"line {line_no}: fee must be non-negative, got {fee}")
    return Transaction(id=str(id_), arrival_time=timestamp, size=size, fee=fee)


def load_trace(path: str | Path, fmt: str = "csv") -> list[Transaction]:
    """Load, validate and time-sort a transaction trace.

    CSV files need the header ``id,timestamp,size,fee``; json-lines
    files carry one object with those keys per line.  Duplicate ids and
    non-positive sizes are rejected with the offending line number.
    """
    path = Path(path)
    records: list[Transaction] = []
    if fmt == "csv":
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is not None and tuple(h.strip() for h in header) != TRACE_COLUMNS:
                raise TraceError(f"line 1: expected header {','.join(TRACE_COLUMNS)}")
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise TraceError(f"line {line_no}: expected 4 columns, got {len(row)}")
                records.append(_record(line_no, *row))
    elif fmt == "json-lines":
        with path.open() as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    values = [obj[c] for c in TRACE_COLUMNS]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise TraceError(f"line {line_no}: malformed row: {exc}") from None
                records.append(_record(line_no, *values))
    else:
        raise ValueError(f"unknown trace format {fmt!r}")

    seen: set[str] = set()
    for tx in records:
        if tx.id in seen:
            raise TraceError(f"duplicate transaction id {tx.id!r}")
        seen.add(tx.id)
    records.sort(key=lambda tx: (tx.arrival_time, tx.id))
    return records


def write_trace(records: Iterable[Transaction], path: str | Path, fmt: str = "csv") -> None:
    """Write a trace in the load_trace file contract."""
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for tx in records:
                writer.writerow([tx.id, _format_time(tx.arrival_time), tx.size, tx.fee])
    elif fmt == "json-lines":
        with path.open("w") as fh:
            for tx in records:
                fh.write(
                    json.dumps(
                        {"id": tx.id, "timestamp": tx.arrival_time, "size": tx.size, "fee": tx.fee}
                    )
                    + "\n"
                )
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def _format_time(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(t)


def load_powers(path: str | Path) -> PowerDistribution:
    """Read a power file: one ``miner_id,power,kind`` entry per line."""
    entries = []
    with Path(path).open() as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise TraceError(f"line {line_no}: expected miner_id,power,kind")
            mid, power, kind = parts
            try:
                power = float(power)
            except ValueError:
                raise TraceError(f"line {line_no}: bad power value {parts[1]!r}") from None
            entries.append((mid, power, kind))
    try:
        return PowerDistribution(tuple(entries))
    except ValueError as exc:
        raise TraceError(str(exc)) from None


def write_powers(dist: PowerDistribution, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write("# miner_id,power,kind\n")
        for mid, power, kind in dist.entries:
            fh.write(f"{mid},{power!r},{kind}\n")


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


def synthesize_trace(
    rate: float,
    duration: float,
    seed: int,
    fee_dist: str = "uniform",
    fee_args: Sequence[float] = (1_000, 100_000),
    size_dist: str = "uniform",
    size_args: Sequence[float] = (200, 2_000),
    start_time: float = 0.0,
    id_prefix: str = "s",
) -> list[Transaction]:
    """Poisson arrivals with i.i.d. integer fees and sizes.

    ``fee_dist`` is ``uniform(lo, hi)`` or ``pareto(shape, scale)`` (the
    heavy tail that makes wealthy heads and attack opportunities);
    ``size_dist`` is ``uniform(lo, hi)`` or ``fixed(size)``.
    Deterministic per seed.
    """
    if rate < 0 or duration < 0:
        raise ValueError("rate and duration must be non-negative")
    rng = np.random.default_rng(seed)
    records: list[Transaction] = []
    if rate == 0 or duration == 0:
        return records
    t = start_time
    index = 0
    end = start_time + duration
    while True:
        t += rng.exponential(1.0 / rate)
        if t > end:
            break
        fee = _draw(rng, fee_dist, fee_args, minimum=0)
        size = _draw(rng, size_dist, size_args, minimum=1)
        records.append(Transaction(id=f"{id_prefix}{index:07d}", arrival_time=t, size=size, fee=fee))
        index += 1
    return records


def _draw(rng: np.random.Generator, dist: str, args: Sequence[float], minimum: int) -> int:
    if dist == "uniform":
        lo, hi = args
        value = rng.integers(int(lo), int(hi) + 1)
    elif dist == "pareto":
        shape, scale = args
        value = (rng.pareto(shape) + 1.0) * scale
    elif dist == "fixed":
        value = args[0]
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    return max(minimum, int(value))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

# Sixteen-pool distribution anchored at the published 0.6% and 17.6%
# extremes; intermediate pools interpolated so the powers sum to one.
# Swap in a measured vector via a power file when available.
_BITCOIN16_POWERS = (
    0.0060, 0.0065, 0.0084, 0.0116, 0.0163, 0.0225, 0.0303, 0.0398,
    0.0509, 0.0635, 0.0779, 0.0940, 0.1119, 0.1315, 0.1529, 0.1760,
)

BITCOIN_PARAMS = ChainParams(block_size_limit=1_000_000, block_interval=600.0)
MONERO_PARAMS = ChainParams(block_size_limit=300_000, block_interval=120.0)

PRESET_NAMES = ("bitcoin16", "bitcoin-hypothetical45", "monero")


def _distribution(powers: Sequence[float]) -> PowerDistribution:
    strongest = max(range(len(powers)), key=lambda i: powers[i])
    entries = tuple(
        (f"m{i:02d}", float(p), "undercutter" if i == strongest else "rational")
        for i, p in enumerate(powers)
    )
    return PowerDistribution(entries)


def preset(name: str) -> tuple[PowerDistribution, ChainParams]:
    """Named population plus chain constants.

    The largest miner is the undercutter; everyone else starts rational.
    Use ``with_honest_fraction`` to carve out the honest share, which is
    a separate run parameter.
    """
    if name == "bitcoin16":
        return _distribution(_BITCOIN16_POWERS), BITCOIN_PARAMS
    if name == "bitcoin-hypothetical45":
        others = [p for p in _BITCOIN16_POWERS[:-1]]
        scale = 0.55 / sum(others)
        return _distribution([p * scale for p in others] + [0.45]), BITCOIN_PARAMS
    if name == "monero":
        others = [p for p in _BITCOIN16_POWERS[:-1]]
        scale = 0.65 / sum(others)
        return _distribution([p * scale for p in others] + [0.35]), MONERO_PARAMS
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
