"""Command line entry point: ``riscache <subcommand> [options]``.

Every subcommand accepts ``--config file.json``; keys in the file set
defaults (same names as the long flags, with dashes as underscores) and
explicit flags override them. ``RISCACHE_SEED`` sets the default seed.
Exit status is 0 only when nothing failed validation or convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from riscache import bench
from riscache.channel import ChannelRealization, draw_channel
from riscache.delivery import SimulationConfig, measured_dof, nulling_targets_for_slot, simulate_delivery
from riscache.grouping import brute_force_grouping, optimal_grouping
from riscache.pda import CacheArray, build_rmapda, single_group_structures, validate_rmapda


def _default_seed() -> int:
    return int(os.environ.get("RISCACHE_SEED", "0"))


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_nulling_bench(args) -> int:
    cfg = bench.BenchConfig(
        K=args.K, G=args.G, iterations=args.iterations, trials=args.trials,
        seed=args.seed, tolerance=args.tolerance, checkpoint_db=args.checkpoint_db,
    )
    result = bench.run_bench(cfg)
    summary = result.summary()
    if args.out:
        path = bench.write_bench(result, args.out)
        print(f"wrote {len(result.trials) * 2} traces and {path}", file=sys.stderr)
    _emit(summary, None)
    return 0 if summary["improved"]["converged"] == cfg.trials else 1


def cmd_grouping(args) -> int:
    try:
        sol = optimal_grouping(args.L, args.t, args.g)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = sol.to_dict()
    status = 0
    if args.verify:
        ref = brute_force_grouping(args.L, args.t, args.g)
        match = (ref.G_opt, ref.g_achieved) == (sol.G_opt, sol.g_achieved)
        out["verified"] = match
        status = 0 if match else 1
    _emit(out, args.out)
    return status


def cmd_build_rmapda(args, parser) -> int:
    if args.r < 1 or args.r > args.L0:
        parser.error(f"r must satisfy 1 <= r <= L0 (got r={args.r}, L0={args.L0})")
    if args.t < 1:
        parser.error("t must be >= 1")
    arr, _ = build_rmapda(args.K, args.t, args.L0, args.r)
    report = validate_rmapda(arr, args.L0, args.r)
    Path(args.out).write_text(arr.to_json())
    _emit({"F": arr.F, "S": arr.S, "Z": arr.Z, "K": arr.K, "params": arr.params,
           "validation": report.to_dict()}, None)
    return 0 if report.ok else 1


def _load_array(path: str) -> CacheArray:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    try:
        return CacheArray.from_dict(doc)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def cmd_simulate(args) -> int:
    try:
        arr = _load_array(args.array)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    groups = arr.slot_groups
    if groups is None:
        groups = single_group_structures(arr, int(arr.params.get("L1", 1)))
    num_antennas = max(max(ants) for sg in groups.values() for _, ants in sg.groups()) + 1
    real_K = arr.K - len(arr.virtual_users)
    if args.channel:
        ch = ChannelRealization.from_json(Path(args.channel).read_text())
    else:
        if args.ris_units:
            G = args.ris_units
        else:
            max_paths = max(len(nulling_targets_for_slot(sg, arr.virtual_users)) for sg in groups.values())
            G = max(1, math.ceil(2 * max_paths * args.margin))
        ch = draw_channel(num_antennas, real_K, G, args.seed)
    cfg = SimulationConfig(
        snr_db=args.snr_db, tolerance=args.tolerance, max_iterations=args.max_iterations,
        restarts=args.restarts, warm_start=not args.no_warm_start, seed=args.seed,
    )
    demand = [k % args.N for k in range(real_K)]
    report = simulate_delivery(arr, ch, demand, cfg, groups)
    doc = report.to_dict()
    doc["G"] = ch.G
    doc["channel_seed"] = ch.seed
    _emit(doc, args.out)
    if args.out:
        print(f"measured_dof={measured_dof(report)} failed_slots={len(report.failed_slots())}",
              file=sys.stderr)
    return 0 if not report.failed_slots() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riscache", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nulling-bench", help="paired baseline vs improved nulling trials")
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--G", type=int, default=300)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--checkpoint-db", type=float, default=-60.0)
    p.add_argument("--out", help="directory for per-trial CSV traces and summary.json")

    p = sub.add_parser("grouping", help="optimal antenna grouping for a target sum-DoF")
    p.add_argument("--L", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--g", type=int)
    p.add_argument("--verify", action="store_true", help="cross-check with brute force")
    p.add_argument("--out")

    p = sub.add_parser("build-rmapda", help="construct and validate an RMAPDA")
    p.add_argument("--K", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--L0", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--out", help="array JSON path")

    p = sub.add_parser("simulate", help="simulate delivery over an array file")
    p.add_argument("--array")
    p.add_argument("--channel", help="channel JSON (otherwise drawn from --seed)")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--ris-units", type=int, default=None)
    p.add_argument("--margin", type=float, default=1.1)
    p.add_argument("--N", type=int, default=1000, help="library size")
    p.add_argument("--snr-db", type=float, default=30.0)
    p.add_argument("--tolerance", type=float, default=1e-20)
    p.add_argument("--max-iterations", type=int, default=20000)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--no-warm-start", action="store_true")
    p.add_argument("--out")

    for action in sub.choices.values():
        action.add_argument("--config", help="JSON file of default option values")
    return parser


REQUIRED = {
    "grouping": ("L", "t", "g"),
    "build-rmapda": ("K", "t", "L0", "r", "out"),
    "simulate": ("array",),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        subparser = next(
            a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
        ).choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = set(defaults) - known
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    missing = [name for name in REQUIRED.get(args.command, ()) if getattr(args, name) is None]
    if missing:
        parser.error(f"{args.command}: missing required option(s) "
                     + ", ".join("--" + m.replace("_", "-") for m in missing))
    if args.command == "nulling-bench":
        return cmd_nulling_bench(args)
    if args.command == "grouping":
        return cmd_grouping(args)
    if args.command == "build-rmapda":
        return cmd_build_rmapda(args, parser)
    return cmd_simulate(args)


if __name__ == "__main__":
    sys.exit(main())
