"""Command-line entry point: run, sweep, synth and check subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import engine, experiment, strategy, trace
from .mempool import ChainParams
from .probability import RacePoint, win_prob_d1, win_prob_series


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="undercut-sim",
        description="Simulate and analyze fee-based undercutting mining attacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one seeded simulation; prints per-miner earnings")
    _add_population_opts(p_run)
    _add_chain_opts(p_run)
    p_run.add_argument("--trace", required=True, help="transaction trace file (CSV)")
    p_run.add_argument("--trace-format", default="csv", choices=("csv", "json-lines"))
    p_run.add_argument("--depth", type=int, default=1, choices=(1, 2), help="give-up depth D")
    p_run.add_argument("--honest", default="0.0", help="honest power fraction")
    p_run.add_argument("--avoidance", default="off", help="off|experimental|exact|strict=<f>")
    p_run.add_argument("--seed", type=int, default=0, help="RNG seed")

    p_sweep = sub.add_parser("sweep", help="repetition sweep; writes a results CSV")
    _add_population_opts(p_sweep)
    _add_chain_opts(p_sweep)
    p_sweep.add_argument("--trace", required=True, help="transaction trace file (CSV)")
    p_sweep.add_argument("--trace-format", default="csv", choices=("csv", "json-lines"))
    p_sweep.add_argument("--depth", default="1", help="give-up depth(s), e.g. 1 or 1,2")
    p_sweep.add_argument(
        "--honest", default="0,0.1,0.2,0.3,0.4,0.5", help="honest fractions, comma separated"
    )
    p_sweep.add_argument("--avoidance", default="off", help="off|experimental|exact|strict=<f>")
    p_sweep.add_argument("--repetitions", type=int, default=50, help="runs per cell")
    p_sweep.add_argument("--seed", type=int, default=0, help="base seed for seed derivation")
    p_sweep.add_argument("--output", required=True, help="results CSV path")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel workers over cells")

    p_synth = sub.add_parser("synth", help="write a synthetic Poisson-arrival trace")
    p_synth.add_argument("--output", required=True, help="trace CSV path")
    p_synth.add_argument("--rate", type=float, required=True, help="transactions per second")
    p_synth.add_argument("--duration", type=float, required=True, help="trace length in seconds")
    p_synth.add_argument("--seed", type=int, default=0, help="RNG seed")
    p_synth.add_argument("--fee-dist", default="uniform", choices=("uniform", "pareto"))
    p_synth.add_argument("--fee-args", default="1000,100000", help="lo,hi or shape,scale")
    p_synth.add_argument("--size-dist", default="uniform", choices=("uniform", "fixed"))
    p_synth.add_argument("--size-args", default="200,2000", help="lo,hi or size")

    p_check = sub.add_parser("check", help="evaluate the analytical attack conditions")
    p_check.add_argument("--bu", type=float, required=True, help="undercutter power fraction")
    p_check.add_argument("--bh", type=float, required=True, help="honest power fraction")
    p_check.add_argument("--gamma", type=float, required=True, help="bandwidth-set / head fee ratio")
    p_check.add_argument("--depth", type=int, default=1, choices=(1, 2), help="give-up depth D")
    p_check.add_argument("--negligible", type=float, default=0.01, help="negligible gamma bound")
    p_check.add_argument("--grid", type=int, default=100, help="shift-objective grid resolution")

    return parser


def _add_population_opts(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--preset", choices=trace.PRESET_NAMES, help="built-in miner population")
    group.add_argument("--powers-file", help="miner population file (miner_id,power,kind lines)")


def _add_chain_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--interval", type=float, default=None, help="block interval in seconds")
    p.add_argument("--block-limit", type=int, default=None, help="block size limit in size units")
    p.add_argument("--negligible", type=float, default=None, help="negligible gamma bound")


def _population(args) -> tuple[trace.PowerDistribution, ChainParams]:
    if args.powers_file:
        dist = trace.load_powers(args.powers_file)
        params = trace.BITCOIN_PARAMS
    else:
        dist, params = trace.preset(args.preset or "bitcoin16")
    overrides = {}
    if args.interval is not None:
        overrides["block_interval"] = args.interval
    if args.block_limit is not None:
        overrides["block_size_limit"] = args.block_limit
    if args.negligible is not None:
        overrides["negligible_fee_threshold"] = args.negligible
    if overrides:
        params = ChainParams(
            block_size_limit=overrides.get("block_size_limit", params.block_size_limit),
            block_interval=overrides.get("block_interval", params.block_interval),
            negligible_fee_threshold=overrides.get(
                "negligible_fee_threshold", params.negligible_fee_threshold
            ),
        )
    return dist, params


def _load_trace(args) -> list:
    path = Path(args.trace)
    if not path.exists():
        raise FileNotFoundError(f"trace file not found: {path}")
    return trace.load_trace(path, fmt=args.trace_format)


def _floats(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip() != ""]


def _cmd_run(args) -> int:
    dist, params = _population(args)
    honest = float(args.honest)
    population = dist.with_honest_fraction(honest)
    miners = engine.profiles(population.entries)
    records = _load_trace(args)
    avoidance = engine.parse_avoidance(args.avoidance)
    result = engine.run(
        records, miners, params, depth=args.depth, avoidance=avoidance, seed=args.seed
    )
    print(f"blocks={result.blocks} confirmed_fee={result.confirmed_fee} attacks={result.attacks}")
    if result.attack_branches:
        tags = ", ".join(f"{k}={v}" for k, v in sorted(result.attack_branches.items()))
        print(f"attack branches: {tags}")
    print(f"{'miner':<8} {'kind':<12} {'power':>8} {'earned':>14} {'share':>8}")
    for m in miners:
        print(
            f"{m.id:<8} {m.kind:<12} {m.power:>8.4f} "
            f"{result.earnings[m.id]:>14d} {result.share(m.id):>8.4f}"
        )
    return 0


def _cmd_sweep(args) -> int:
    dist, params = _population(args)
    records = _load_trace(args)
    config = experiment.ExperimentConfig(
        powers=dist,
        params=params,
        honest_fractions=tuple(_floats(args.honest)),
        depths=tuple(int(d) for d in _floats(args.depth)),
        avoidance=engine.parse_avoidance(args.avoidance),
        repetitions=args.repetitions,
        base_seed=args.seed,
    )
    summary = experiment.run_experiment(config, records, jobs=args.jobs)
    experiment.emit_results(summary, args.output)
    print(f"wrote {len(summary.cells)} cells to {args.output}")
    return 0


def _cmd_synth(args) -> int:
    records = trace.synthesize_trace(
        rate=args.rate,
        duration=args.duration,
        seed=args.seed,
        fee_dist=args.fee_dist,
        fee_args=_floats(args.fee_args),
        size_dist=args.size_dist,
        size_args=_floats(args.size_args),
    )
    trace.write_trace(records, args.output)
    print(f"wrote {len(records)} transactions to {args.output}")
    return 0


def _cmd_check(args) -> int:
    split = strategy.PowerSplit.of(args.bu, args.bh)
    gamma = args.gamma
    if args.depth == 1:
        action, branch, tag = strategy.undercut_branches_d1(split, gamma, args.negligible)
        returns = strategy.expected_returns_d1(
            split, gamma, delta=split.rational * strategy.rational_join_d1(split, gamma)
        )
        print(f"depth=1 bu={args.bu} bh={args.bh} gamma={gamma}")
        print(f"decision: {action}" + (f" (branch {branch}) [{tag}]" if branch else ""))
        print(
            "thresholds: limited=%.6g sufficient=%.6g join=%.6g"
            % (
                strategy.limited_bound_d1(split),
                strategy.sufficient_bound_d1(split),
                strategy.join_threshold_d1(split),
            )
        )
        join = strategy.rational_join_d1(split, gamma)
        canonical = strategy.rational_shift_general(
            engine.ForkState(1, 1, (), (), split.undercutter, 0.0, 0.0, 0.0),
            split,
            depth=1,
            claimable_main=gamma,
            claimable_fork=1.0,
            owned_main=split.rational / (1.0 - split.undercutter) if split.undercutter < 1 else 0.0,
            owned_fork=0.0,
            grid=args.grid,
        )
        print(f"rational join at tie: x={join:g} (grid scan: x={canonical:g})")
        print(f"fork win probability at tie: {win_prob_d1(split.undercutter, split.rational * join):.6g}")
    else:
        action, branch, tag = strategy.undercut_branches_d2(split, gamma, args.negligible)
        returns = strategy.expected_returns_d2(split, gamma)
        print(f"depth=2 bu={args.bu} bh={args.bh} gamma={gamma}")
        print(f"decision: {action}" + (f" (branch {branch}) [{tag}]" if branch else ""))
        print(
            "thresholds: limited=%.6g sufficient=%.6g tie=%.6g"
            % (
                strategy.limited_bound_d2(split),
                strategy.sufficient_bound_d2(split),
                strategy.tie_threshold_d2(split),
            )
        )
        join = strategy.rational_shift_d2_tie(split, gamma)
        effective = min(split.undercutter + split.rational * join, 1.0)
        point = RacePoint(fork_power=effective, safe_depth=2, lead=0)
        print(f"rational join at tie: x={join:g}")
        print(f"fork win probability at tie (series): {win_prob_series(point):.6g}")
    print(f"expected returns: attack={returns.attack_return:.6g} baseline={returns.baseline_return:.6g}")
    return 0


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "synth": _cmd_synth, "check": _cmd_check}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, engine.StalledSimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
