"""Command line front end.

Subcommands:
  run              full pipeline, optionally sweeping one parameter; writes
                   results.csv, per-point flow dumps and per-metric SVG charts
  validate-config  parse a scenario file and report what it describes
  dump-graph       print the layered resource graph as a tab-separated list
  oracle           cross-check scheduler/assignment/power against the slow
                   reference implementations on the given scenario

Exit codes: 0 success, 2 bad usage or config, 3 runtime or check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

from . import oracles, pipeline, svgplot
from .flow import FlowError
from .scenario import Scenario, ScenarioError, load_scenario, nominal_gain, with_channel
from .scheduling import SchedulerError, build_conflict_graph, select_schedule
from .subchannel import assign, assignment_cost, interference_matrix
from .trrg import build_trrg, dump_graph


def _parse_values(args) -> list[float] | None:
    if args.values:
        try:
            return [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError as exc:
            raise ScenarioError(f"bad --values: {exc}") from None
    if args.range:
        parts = args.range.split(":")
        if len(parts) != 3:
            raise ScenarioError("--range expects lo:hi:step")
        try:
            lo, hi, step = (float(p) for p in parts)
        except ValueError as exc:
            raise ScenarioError(f"bad --range: {exc}") from None
        if step <= 0 or hi < lo:
            raise ScenarioError("--range needs step > 0 and hi >= lo")
        values = []
        v = lo
        while v <= hi + 1e-12 * max(1.0, abs(hi)):
            values.append(v)
            v = lo + step * len(values)
        return values
    return None


def _load(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    if getattr(args, "deterministic_channel", False):
        scenario = with_channel(scenario, deterministic=True)
    return scenario


_CHART_METRICS = (
    ("throughput_bits", "throughput (bits)", lambda p: p.solution.throughput_bits),
    ("consumed_power_watts", "consumed power (W)", lambda p: p.consumed_power_watts),
    ("objective", "objective", lambda p: p.solution.objective),
    ("outage_rate", "AV outage rate", lambda p: p.av_outage),
)


def _cmd_run(args) -> int:
    scenario = _load(args)
    approaches = (
        list(pipeline.APPROACHES)
        if args.approach.lower() == "all"
        else [a.strip() for a in args.approach.split(",") if a.strip()]
    )
    sweep = None if args.sweep == "none" else args.sweep
    values = _parse_values(args)
    if values is not None and sweep is None:
        raise ScenarioError("--values/--range need --sweep")
    if sweep and values is None:
        raise ScenarioError(f"--sweep {sweep} needs --values or --range")

    points = pipeline.run_experiment(
        scenario,
        approaches,
        sweep_param=sweep,
        values=values,
        eval_draws=args.eval_draws,
        workers=args.workers,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [pipeline.point_row(p) for p in points]
    (out_dir / "results.csv").write_text(pipeline.results_csv(rows))
    for point in points:
        dump = pipeline.point_flow_dump(point, scenario)
        (out_dir / pipeline.flow_dump_name(point)).write_text(dump)
    if sweep:
        for metric, label, pick in _CHART_METRICS:
            series: dict[str, list[tuple[float, float]]] = {}
            for point in points:
                series.setdefault(point.approach, []).append(
                    (point.sweep_value, pick(point))
                )
            chart = svgplot.line_chart(
                series,
                title=f"{metric} vs {sweep}",
                x_label=sweep,
                y_label=label,
                log_x=sweep == "max_power",
            )
            (out_dir / f"{metric}.svg").write_text(chart)
    for row in rows:
        at = f" {row['sweep_param']}={row['value']}" if row["sweep_param"] else ""
        print(
            f"{row['approach']}{at}: throughput={row['throughput_bits']} bits,"
            f" objective={row['objective']}, outage={row['outage_rate'] or 'n/a'}"
        )
    print(f"wrote {out_dir / 'results.csv'}")
    return 0


def _cmd_validate(args) -> int:
    scenario = _load(args)
    frames = pipeline.scenario_frames(scenario)
    roles: dict[str, list[str]] = {}
    for v in scenario.vehicles.values():
        roles.setdefault(v.role, []).append(v.vid)
    print(f"scenario ok: {args.scenario}")
    for role in ("perceptual", "relay", "fog"):
        print(f"  {role}: {', '.join(sorted(roles.get(role, []))) or '-'}")
    print(f"  avs: {len(scenario.avs)}, tasks: {len(scenario.tasks)}, seed: {scenario.seed}")
    print(
        f"  horizon {scenario.horizon_s:g} s, range {scenario.comm_range_m:g} m"
        f" -> {len(frames)} frames"
    )
    return 0


def _cmd_dump_graph(args) -> int:
    scenario = _load(args)
    frames = pipeline.scenario_frames(scenario)
    text = dump_graph(build_trrg(scenario, frames))
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_oracle(args) -> int:
    scenario = _load(args)
    frames = pipeline.scenario_frames(scenario)
    trrg = build_trrg(scenario, frames)
    schedule, pairing = pipeline.schedule_and_pair(scenario, trrg)
    sigma2 = scenario.channel.noise_watts
    failures = 0

    for frame in trrg.frames:
        arcs = trrg.comm_arcs_in_frame(frame.index)
        if not arcs:
            continue
        weights = {
            a: nominal_gain(
                scenario.position_at(a.tail.vid, frame.midpoint),
                scenario.position_at(a.head.vid, frame.midpoint),
            )
            / sigma2
            for a in arcs
        }
        graph = build_conflict_graph(arcs, weights)
        fast = select_schedule(graph)
        slow = oracles.mwis_bruteforce(graph)
        ok = fast == slow
        failures += not ok
        print(f"frame {frame.index}: schedule {'ok' if ok else 'MISMATCH'} ({len(fast)} links)")
        chosen = [graph.arcs[i] for i in fast]
        if chosen and scenario.avs:
            cost = interference_matrix(scenario, frame, chosen)
            if max(cost.shape) <= 8:
                fast_m = assign(cost)
                slow_m = oracles.assignment_bruteforce(cost)
                ok = math.isclose(
                    assignment_cost(cost, fast_m),
                    assignment_cost(cost, slow_m),
                    rel_tol=1e-9,
                    abs_tol=1e-12,
                )
                failures += not ok
                print(f"frame {frame.index}: pairing {'ok' if ok else 'MISMATCH'}")

    powers, active = pipeline.allocate_powers(scenario, trrg, schedule, pairing, robust=True)
    for pair in active[: args.pairs]:
        _, g_link, g_avrx = pipeline.pair_training_samples(
            scenario, next(f for f in frames if f.index == pair.arc.frame), pair.arc, pair.av_id
        )
        grid_link, grid_av, grid_rate = oracles.pair_power_grid(
            g_link,
            g_avrx,
            pair.uset,
            scenario.channel.gamma_v_th,
            sigma2,
            scenario.channel.bandwidth_hz,
            scenario.channel.p_max_v_watts,
            scenario.channel.p_max_av_watts,
        )
        rate = pair.power.capacity_bps
        ok = grid_rate <= 0 or abs(rate - grid_rate) <= 1e-3 * grid_rate + 1e-6
        failures += not ok
        print(
            f"pair {pair.arc.label()} x {pair.av_id}: power {'ok' if ok else 'MISMATCH'}"
            f" (rate {rate:.4g} vs grid {grid_rate:.4g} bps)"
        )

    print(f"oracle checks: {'all ok' if failures == 0 else f'{failures} mismatches'}")
    return 0 if failures == 0 else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fogflow",
        description="cooperative content dissemination simulator for vehicular fog networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario INI file")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    run = sub.add_parser("run", parents=[common], help="run the pipeline, optionally sweeping")
    run.add_argument(
        "--approach",
        default="robust",
        help="comma-separated approaches or 'all' "
        f"(known: {', '.join(pipeline.APPROACHES)})",
    )
    run.add_argument(
        "--sweep", choices=pipeline.SWEEP_PARAMS + ("none",), default="none"
    )
    run.add_argument("--range", default=None, help="sweep values lo:hi:step (inclusive)")
    run.add_argument("--values", default=None, help="explicit comma-separated sweep values")
    run.add_argument("--eval-draws", type=int, default=2000, help="outage evaluation draws per link")
    run.add_argument("--workers", type=int, default=1, help="parallel sweep-point processes")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument(
        "--deterministic-channel",
        action="store_true",
        help="disable shadowing, fading and forecast error",
    )
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate-config", parents=[common], help="parse and summarize a scenario")
    val.set_defaults(func=_cmd_validate)

    dump = sub.add_parser("dump-graph", parents=[common], help="print the layered resource graph")
    dump.add_argument("--out", default=None, help="write to a file instead of stdout")
    dump.set_defaults(func=_cmd_dump_graph)

    orc = sub.add_parser("oracle", parents=[common], help="cross-check against slow references")
    orc.add_argument("--pairs", type=int, default=3, help="power pairs to grid-check")
    orc.set_defaults(func=_cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SchedulerError, FlowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
