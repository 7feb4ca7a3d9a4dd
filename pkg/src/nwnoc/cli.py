"""Command-line front end: ``nwnoc run | preset | check``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import experiments
from .config import ExperimentConfig, load_config, preset_config
from .errors import NocError
from .protocol import Variant
from .topology import MeshSpec, parse_mesh_size

PRESETS = ("fig5a", "fig5b", "zeroload", "boundary-bw")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nwnoc", description="Narrow/wide mesh NoC simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default: Optional[int] = None):
        sp.add_argument("--seed", type=int, default=seed_default, help="RNG seed")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--max-cycles", type=int, help="cycle budget per simulation")
        sp.add_argument("--variant", choices=[v.value for v in Variant],
                        help="network variant (presets sweep both when omitted)")

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--trace", action="store_true", help="write the flit trace CSV")
    common(run)

    pre = sub.add_parser("preset", help="run a built-in reproduction")
    pre.add_argument("name", choices=PRESETS)
    pre.add_argument("--mesh", default=None, help="mesh size, e.g. 7x7")
    pre.add_argument("--config", type=Path, help="start from this config instead of the defaults")
    pre.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
    common(pre)

    chk = sub.add_parser("check", help="randomized ordering-oracle sweep")
    chk.add_argument("--runs", type=int, default=10_000)
    chk.add_argument("--seed", type=int, default=0, help="first seed")
    chk.add_argument("--jobs", type=int, default=1)
    return p


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.max_cycles is not None:
        cfg = dataclasses.replace(cfg, max_cycles=args.max_cycles)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    if args.variant is not None:
        cfg = dataclasses.replace(cfg, variant=Variant(args.variant))
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    report, run = experiments.simulate(cfg, trace=args.trace)
    out = Path(cfg.out_dir)
    rows = [("variant", cfg.variant.value), ("cycles", report.cycles),
            ("completed", report.completed), ("timeouts", report.timeouts),
            ("narrow_read_lat", f"{report.narrow.mean:.4f}"),
            ("narrow_read_lat_median", f"{report.narrow.median:.4f}"),
            ("narrow_read_lat_p99", f"{report.narrow.p99:.4f}"),
            ("wide_read_lat", f"{report.wide.mean:.4f}"),
            ("wide_read_bw", f"{report.effective_wide_bw:.4f}"),
            ("rob_stalls", report.rob_stalls), ("table_stalls", report.table_stalls),
            ("order_violations", len(report.order_violations))]
    experiments.write_atomic(out / "summary.csv", experiments.csv_text(("metric", "value"), rows))
    if args.trace:
        experiments.write_atomic(out / "trace.csv", run.trace_csv())
        experiments.write_atomic(out / "occupancy.csv", experiments.csv_text(
            ("ni", "cycle", "rob_free_bytes", "outstanding"), report.occupancy))
    print(report.summary())
    return _verdict(report.flagged, [f"{report.timeouts} transactions timed out"] * bool(report.timeouts)
                    + report.order_violations + report.rob_leaks)


def _verdict(bad: bool, problems: Sequence[str]) -> int:
    if not bad:
        return 0
    for p in problems[:20]:
        print(f"error: {p}", file=sys.stderr)
    return 1


def _print_sweep(res: experiments.SweepResult) -> None:
    levels = None
    for (d, v), rows in sorted(res.curves.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        if levels is None:
            levels = [lv for lv, _ in rows]
            print(f"{'curve':<14}" + "".join(f"{lv:>9}" for lv in levels))
        print(f"{d.value + '_' + v.short:<14}" + "".join(f"{val:>9.2f}" for _, val in rows))
    for f in res.files:
        print(f"wrote {f}")


def _cmd_preset(args) -> int:
    mesh = parse_mesh_size(args.mesh) if args.mesh else None
    if args.config is not None:
        cfg = load_config(args.config)
        if mesh is not None:
            cfg = dataclasses.replace(cfg, mesh=MeshSpec(*mesh))
    else:
        cfg = preset_config(mesh)
    cfg = _apply_overrides(cfg, args)

    if args.name == "boundary-bw":
        # the headline figure is for a 7x7 mesh
        spec = cfg.mesh if (mesh or args.config) else MeshSpec(7, 7)
        for key, value in experiments.boundary_report(spec):
            print(f"{key},{value}")
        return 0
    if args.name == "zeroload":
        z = experiments.zeroload(cfg)
        print(f"round_trip_cycles,{z.round_trip_cycles}")
        print(f"router_cycles,{z.router_cycles}")
        print(f"ni_cycles,{z.ni_cycles}")
        print(f"endpoint_cycles,{z.endpoint_cycles}")
        expected = z.router_cycles + z.ni_cycles + z.endpoint_cycles
        if z.round_trip_cycles != expected:
            print(f"error: round trip {z.round_trip_cycles} != {expected}", file=sys.stderr)
            return 1
        return 0

    out = Path(args.out) if args.out is not None else Path(cfg.out_dir) / args.name
    run = experiments.fig5a if args.name == "fig5a" else experiments.fig5b
    if args.variant is not None:
        print("note: presets always sweep both variants; --variant is ignored", file=sys.stderr)
    res = run(cfg, out, jobs=args.jobs)
    _print_sweep(res)
    flagged = res.flagged
    return _verdict(bool(flagged), flagged)


def _cmd_check(args) -> int:
    problems = experiments.ordering_check(args.runs, args.seed, args.jobs)
    print(f"runs,{args.runs}")
    print(f"violations,{len(problems)}")
    return _verdict(bool(problems), [str(p) for p in problems])


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "preset":
            return _cmd_preset(args)
        return _cmd_check(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
