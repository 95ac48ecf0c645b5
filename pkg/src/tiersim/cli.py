"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (flags or config), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import budget as budget_mod
from .config import Config, ConfigError, apply_overrides, config_from_dict, dumps, load_config, read_config_dict
from .placement import (
    classify_hot_cold,
    kv_rows_available,
    plan_swaps,
    swap_cost,
    tier_equivalent_target,
)
from .report import REPORT_CSV_COLUMNS, TRACE_COLUMNS, CsvStream, emit, flat_row
from .serving import Simulator, build_usage_table, placement_for
from .timing import TierTiming, build_tier_table, fit_staircase, retier, system_with_timing
from .workload import load_usage_table

log = logging.getLogger("tiersim")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="JSON config file or preset name")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="dotted-key override")
    p.add_argument("--seed", type=int, help="override workload.seed")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tiersim", description="Tiered-DRAM MoE serving simulator")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one serving simulation")
    _common(p)
    p.add_argument("--policy", choices=["tiering", "no-tiering"])
    p.add_argument("--duration", type=float, help="seconds of request arrivals")
    p.add_argument("--trace", help="per-step CSV trace path")

    p = sub.add_parser("sweep", help="run a grid of simulations, one CSV row per cell")
    _common(p)
    p.add_argument("--grid", action="append", default=[], metavar="AXIS=V1,V2,...",
                   help="axis is hit, batch, layers, policy or a dotted config key")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("place", help="expert placement for one topic")
    _common(p)
    p.add_argument("--topic", help="topic to place (default: first topic)")
    p.add_argument("--usage", help="usage table JSON file")

    p = sub.add_parser("swap-cost", help="swap overhead between topic placements")
    _common(p)
    p.add_argument("--usage", help="usage table JSON file")

    p = sub.add_parser("derive-tiers", help="per-tier timing and bandwidth as CSV")
    _common(p, config_required=False)
    p.add_argument("--layers", type=int, help="refit the staircase and retier for this many layers")

    p = sub.add_parser("budget", help="power and area ledger")
    _common(p, config_required=False)
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")

    p = sub.add_parser("validate-config", help="load and validate a config")
    _common(p)
    return ap


def _load(args) -> Config:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"workload.seed={args.seed}")
    if args.config is None:
        return config_from_dict(apply_overrides({}, overrides))
    return load_config(args.config, overrides)


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load(args)
    sim = cfg.sim
    if args.policy:
        sim = replace(sim, policy=args.policy)
    if args.duration is not None:
        sim = replace(sim, duration=args.duration)
    cfg = replace(cfg, sim=sim)
    trace = CsvStream(args.trace, TRACE_COLUMNS) if args.trace else None
    try:
        report = Simulator(cfg, trace=trace).run()
    finally:
        if trace:
            trace.close()
    _write(emit(report, "json"), args.out)
    return EXIT_OK


_AXES = {"hit": "sim.hot_hit_target", "batch": "workload.max_batch", "layers": "model.num_layers", "policy": "sim.policy"}


def parse_grid(items: Sequence[str]) -> list[tuple[str, list]]:
    axes = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"grid axis {item!r} is not of the form AXIS=V1,V2")
        name, raw = item.split("=", 1)
        values = []
        for v in raw.split(","):
            try:
                values.append(json.loads(v))
            except json.JSONDecodeError:
                values.append(v)
        axes.append((name.strip(), values))
    return axes


def _run_cell(cfg_text: str, cell: dict) -> dict:
    cfg = config_from_dict(json.loads(cfg_text))
    report = Simulator(cfg).run()
    return {**cell, **flat_row(report)}


def cmd_sweep(args) -> int:
    base = read_config_dict(args.config)
    overrides = list(args.overrides) + ([f"workload.seed={args.seed}"] if args.seed is not None else [])
    base = apply_overrides(base, overrides)
    axes = parse_grid(args.grid)
    names = [n for n, _ in axes]
    cells, texts = [], []
    for combo in itertools.product(*(vals for _, vals in axes)):
        cell = dict(zip(names, combo))
        data = apply_overrides(base, [f"{_AXES.get(n, n)}={json.dumps(v)}" for n, v in cell.items()])
        texts.append(dumps(config_from_dict(data)))  # validate every cell up front
        cells.append(cell)
    columns = names + [c for c in REPORT_CSV_COLUMNS if c not in names]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        stream = CsvStream(out, columns)
        if args.jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as ex:
                for row in ex.map(_run_cell, texts, cells):
                    stream.write(row)
        else:
            for text, cell in zip(texts, cells):
                stream.write(_run_cell(text, cell))
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _usage(cfg: Config, path: Optional[str]):
    if path:
        return load_usage_table(path)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.workload.seed).spawn(4)[3])
    return build_usage_table(cfg, rng)


def cmd_place(args) -> int:
    cfg = _load(args)
    table = _usage(cfg, args.usage)
    topic = args.topic or table.topics[0]
    if topic not in table.topics:
        raise ConfigError(f"unknown topic {topic!r}", "topic")
    res = placement_for(table, topic, cfg.model, cfg.system)
    tiers = build_tier_table(cfg.system)
    resid = classify_hot_cold(res, tiers)
    experts = [
        {
            "layer": l,
            "expert": e,
            "rows": list(res.intervals[(l, e)]),
            "hot": resid[(l, e)]["hot"],
            "tiers": list(resid[(l, e)]["tiers"]),
        }
        for l, e in sorted(res.intervals)
    ]
    doc = {
        "topic": topic,
        "delta_rows": res.delta_rows,
        "phi": res.phi,
        "tau": len(res.hot),
        "kv_tier": cfg.kv_tier,
        "kv_rows_free_in_tier": kv_rows_available(res, tiers, cfg.kv_tier),
        "experts": experts,
    }
    _write(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_swap_cost(args) -> int:
    cfg = _load(args)
    table = _usage(cfg, args.usage)
    tiers = build_tier_table(cfg.system)
    places = {t: placement_for(table, t, cfg.model, cfg.system) for t in table.topics}
    rows = []
    for a, b in itertools.permutations(table.topics, 2):
        target = places[b]
        if cfg.sim.swap_mode == "tier-equivalent":
            target = tier_equivalent_target(places[a], target, tiers)
        plan = plan_swaps(places[a], target)
        ns, pj = swap_cost(plan, tiers, cfg.system)
        rows.append(
            dict(model=cfg.model.name, from_topic=a, to_topic=b, row_pairs=len(plan.pairs), swap_time_ms=ns * 1e-6, swap_energy_mj=pj * 1e-9)
        )
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        s = CsvStream(out, rows[0].keys() if rows else ["model"])
        for r in rows:
            s.write(r)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_derive_tiers(args) -> int:
    cfg = _load(args)
    system = cfg.system
    if args.layers and args.layers != system.dram_layers:
        base = TierTiming(tuple(system.trcd), system.trp, system.tras_offset)
        model = fit_staircase(base, system.dram_layers)
        system = system_with_timing(system, retier(model, args.layers, system.num_tiers, system.trp, system.tras_offset), args.layers)
    t = build_tier_table(system)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        s = CsvStream(out, ["tier", "trcd_ns", "trc_ns", "chip_bw_TBps"])
        for i in range(t.num_tiers):
            s.write(dict(tier=i, trcd_ns=float(t.trcd(i)), trc_ns=float(t.trc(i)), chip_bw_TBps=t.chip_bandwidth[i] / 1e12))
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_budget(args) -> int:
    cfg = _load(args)
    led = budget_mod.ledger(cfg.system.budget, cfg.system)
    if args.json:
        text = json.dumps(led, indent=2) + "\n"
    else:
        width = max(map(len, led))
        lines = []
        for k, v in led.items():
            val = f"{v:.6g}" if isinstance(v, float) else str(v)
            lines.append(f"{k:<{width}}  {val}")
        text = "\n".join(lines) + "\n"
    _write(text, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    _write(dumps(cfg) + "\n", args.out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "place": cmd_place,
    "swap-cost": cmd_swap_cost,
    "derive-tiers": cmd_derive_tiers,
    "budget": cmd_budget,
    "validate-config": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
