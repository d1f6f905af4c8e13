"""End-to-end experiment driver.

One sweep point = one scenario variant run through the full chain: contact
frames, resource graph, per-frame link scheduling, subchannel pairing, robust
(or nominal) power allocation, arc capacities, approach-specific capacity
masking, BS leg gain quantiles, and the flow solve. Metrics rows are
collected into a CSV whose bytes depend only on the scenario file and seed.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .flow import FlowSolution, baseline_mask, build_program, dump_solution, solve
from .power import PairPower, arc_capacities, solve_pair
from .robust import (
    UncertaintySet,
    learn_uncertainty_set,
    nominal_set,
    quantile_gain,
    split_epsilon,
    training_coverage,
)
from .scenario import (
    Frame,
    Scenario,
    child_rng,
    contact_frames,
    nominal_gain,
    predicted_gain_samples,
    sample_gain,
)
from .scheduling import schedule_frame
from .subchannel import assign, interference_matrix
from .trrg import Arc, Trrg, build_trrg

APPROACHES = ("robust", "norobust", "v2only", "v5only", "withoutcarry")
SWEEP_PARAMS = ("max_power", "delay", "cache", "compute")

CSV_COLUMNS = (
    "approach",
    "sweep_param",
    "value",
    "throughput_bits",
    "consumed_power_watts",
    "objective",
    "outage_rate",
    "frames",
    "scheduled_links",
    "active_links",
    "bs_power_watts",
    "training_coverage",
    "flow_iterations",
    "kkt_stationarity",
    "kkt_primal",
    "kkt_complementarity",
)


@dataclass(frozen=True)
class ActivePair:
    arc: Arc
    av_id: str
    power: PairPower
    samples: np.ndarray  # (D, 2) training gains (g_av_receiver, g_tx_crosstalk)
    uset: UncertaintySet


@dataclass
class PointResult:
    approach: str
    sweep_param: str
    sweep_value: float
    frames: list[Frame]
    trrg: Trrg
    schedule: dict[int, list[Arc]]
    pairing: dict[Arc, str]
    pair_powers: dict[Arc, PairPower]
    capacities: dict[Arc, float]
    solution: FlowSolution
    active: list[ActivePair] = field(default_factory=list)
    av_outage: float = math.nan
    coverage: float = math.nan
    consumed_power_watts: float = 0.0


def scenario_for_point(base: Scenario, sweep_param: str | None, value: float) -> Scenario:
    """Apply one sweep axis to a copy of the scenario."""
    if sweep_param is None:
        return base
    if sweep_param == "max_power":
        channel = dataclasses.replace(
            base.channel,
            p_max_v_watts=value,
            p_max_av_watts=value,
            p_max_bs_watts=value,
        )
        return dataclasses.replace(base, channel=channel)
    if sweep_param == "delay":
        budget = int(round(value))
        if budget < 1:
            raise ValueError("delay sweep values must round to >= 1 frame")
        tasks = tuple(
            dataclasses.replace(t, delay_budget_frames=budget) for t in base.tasks
        )
        return dataclasses.replace(base, tasks=tasks)
    if sweep_param == "cache":
        vehicles = {
            vid: dataclasses.replace(v, cache_bits=value) if v.role == "relay" else v
            for vid, v in base.vehicles.items()
        }
        return dataclasses.replace(base, vehicles=vehicles)
    if sweep_param == "compute":
        vehicles = {
            vid: dataclasses.replace(v, compute_bits=value) if v.role == "fog" else v
            for vid, v in base.vehicles.items()
        }
        return dataclasses.replace(base, vehicles=vehicles)
    raise ValueError(f"unknown sweep parameter {sweep_param!r}")


def schedule_and_pair(
    scenario: Scenario, trrg: Trrg
) -> tuple[dict[int, list[Arc]], dict[Arc, str]]:
    """Per frame: max-CNR conflict-free link set, then min-crosstalk AV pairing."""
    sigma2 = scenario.channel.noise_watts
    av_ids = list(scenario.avs)
    schedule: dict[int, list[Arc]] = {}
    pairing: dict[Arc, str] = {}
    for frame in trrg.frames:
        arcs = trrg.comm_arcs_in_frame(frame.index)
        if not arcs:
            schedule[frame.index] = []
            continue
        t_mid = frame.midpoint
        weights = {
            a: nominal_gain(
                scenario.position_at(a.tail.vid, t_mid),
                scenario.position_at(a.head.vid, t_mid),
            )
            / sigma2
            for a in arcs
        }
        chosen = schedule_frame(arcs, weights)
        schedule[frame.index] = chosen
        if not chosen or not av_ids:
            continue
        cost = interference_matrix(scenario, frame, chosen)
        for row, col in assign(cost).items():
            pairing[chosen[row]] = av_ids[col]
    return schedule, pairing


def _pair_sample_rng(scenario: Scenario, arc: Arc, av_id: str, kind: str):
    return child_rng(
        scenario.seed, "pair", arc.frame, arc.tail.vid, arc.head.vid, av_id, kind
    )


def pair_training_samples(
    scenario: Scenario, frame: Frame, arc: Arc, av_id: str
) -> tuple[np.ndarray, float, float]:
    """Forecast-gain draws for one scheduled link and its paired AV.

    Returns the (D, 2) uncertainty samples (AV-to-its-receiver gain,
    transmitter-to-that-receiver crosstalk gain; the AV receiver is the BS
    whose uplink resources the link reuses) plus the mean V2V link gain and
    mean AV-to-V2V-receiver interference gain used for the rate expression.
    """
    channel = scenario.channel
    n = channel.sample_count
    t_mid = frame.midpoint
    tx_xy = scenario.position_at(arc.tail.vid, t_mid)
    rx_xy = scenario.position_at(arc.head.vid, t_mid)
    av_xy = scenario.avs[av_id]
    bs_xy = scenario.bs_xy

    g_av = predicted_gain_samples(
        av_xy, bs_xy, channel, _pair_sample_rng(scenario, arc, av_id, "avbs"), n
    )
    g_cross = predicted_gain_samples(
        tx_xy, bs_xy, channel, _pair_sample_rng(scenario, arc, av_id, "txbs"), n
    )
    g_link = predicted_gain_samples(
        tx_xy, rx_xy, channel, _pair_sample_rng(scenario, arc, av_id, "v2v"), n
    )
    g_avrx = predicted_gain_samples(
        av_xy, rx_xy, channel, _pair_sample_rng(scenario, arc, av_id, "avrx"), n
    )
    samples = np.column_stack([g_av, g_cross])
    return samples, float(g_link.mean()), float(g_avrx.mean())


def allocate_powers(
    scenario: Scenario,
    trrg: Trrg,
    schedule: dict[int, list[Arc]],
    pairing: dict[Arc, str],
    robust: bool,
) -> tuple[dict[Arc, PairPower], list[ActivePair]]:
    """Per scheduled-and-paired link: train the uncertainty set, solve powers."""
    channel = scenario.channel
    frames = {f.index: f for f in trrg.frames}
    powers: dict[Arc, PairPower] = {}
    active: list[ActivePair] = []
    for frame_index in sorted(schedule):
        for arc in schedule[frame_index]:
            av_id = pairing.get(arc)
            if av_id is None:
                continue
            samples, g_link, g_avrx = pair_training_samples(
                scenario, frames[frame_index], arc, av_id
            )
            if robust:
                uset = learn_uncertainty_set(samples, channel.epsilon)
            else:
                uset = nominal_set(samples.mean(axis=0))
            power = solve_pair(
                g_link,
                g_avrx,
                uset,
                channel.gamma_v_th,
                channel.noise_watts,
                channel.bandwidth_hz,
                channel.p_max_v_watts,
                channel.p_max_av_watts,
                zeta=channel.zeta_watts,
            )
            powers[arc] = power
            if power.link_active and power.capacity_bps > 0.0:
                active.append(ActivePair(arc, av_id, power, samples, uset))
    return powers, active


def realized_violations(
    scenario: Scenario, active: list[ActivePair], n_draws: int, tag: str
) -> dict[Arc, int]:
    """Count AV-constraint violations over fresh forecast-error draws per link."""
    channel = scenario.channel
    gamma = channel.gamma_v_th
    sigma2 = channel.noise_watts
    frames = {f.index: f for f in scenario_frames(scenario)}
    counts: dict[Arc, int] = {}
    for pair in active:
        frame = frames[pair.arc.frame]
        t_mid = frame.midpoint
        tx_xy = scenario.position_at(pair.arc.tail.vid, t_mid)
        av_xy = scenario.avs[pair.av_id]
        rng_av = child_rng(
            scenario.seed, tag, pair.arc.frame, pair.arc.tail.vid,
            pair.arc.head.vid, pair.av_id, "avbs",
        )
        rng_cross = child_rng(
            scenario.seed, tag, pair.arc.frame, pair.arc.tail.vid,
            pair.arc.head.vid, pair.av_id, "txbs",
        )
        g_av = predicted_gain_samples(av_xy, scenario.bs_xy, channel, rng_av, n_draws)
        g_cross = predicted_gain_samples(
            tx_xy, scenario.bs_xy, channel, rng_cross, n_draws
        )
        slack = (
            pair.power.p_av_watts * g_av / gamma
            - pair.power.p_link_watts * g_cross
            - sigma2
        )
        counts[pair.arc] = int(np.count_nonzero(slack < 0.0))
    return counts


def outage_eval(
    scenario: Scenario, active: list[ActivePair], trials: int, tag: str = "outage"
) -> dict[str, float]:
    """Monte-Carlo AV-constraint outage rate per AV over fresh forecast draws.

    An AV reused by several links reports its worst per-link rate.
    """
    if trials < 1:
        raise ValueError("outage_eval needs trials >= 1")
    counts = realized_violations(scenario, active, trials, tag)
    rates: dict[str, float] = {}
    for pair in active:
        rate = counts[pair.arc] / trials
        rates[pair.av_id] = max(rates.get(pair.av_id, 0.0), rate)
    return rates


_FRAMES_CACHE: dict[tuple, list[Frame]] = {}


def scenario_frames(scenario: Scenario) -> list[Frame]:
    key = (
        tuple(sorted((v.vid, v.x0, v.y0, v.speed_mps) for v in scenario.vehicles.values())),
        scenario.comm_range_m,
        scenario.horizon_s,
    )
    if key not in _FRAMES_CACHE:
        _FRAMES_CACHE[key] = contact_frames(scenario)
    return _FRAMES_CACHE[key]


def bs_quantile_gains(
    scenario: Scenario, frames: list[Frame], trrg: Trrg
) -> dict[tuple[str, str], float]:
    """Lower-quantile BS leg gains per task: fog uplink (I), downlink to the
    content requester, taken as the task source (II), sampled at the delay
    frame under the full shadowing+fading law."""
    channel = scenario.channel
    eps_1, eps_2 = split_epsilon(channel.epsilon)
    n = channel.sample_count
    fog_ids = scenario.ids_with_role("fog")
    out: dict[tuple[str, str], float] = {}
    for task in scenario.tasks:
        k_eval = min(task.delay_budget_frames, len(frames))
        t_mid = frames[k_eval - 1].midpoint
        gains_i = []
        for fog in fog_ids:
            fog_xy = scenario.position_at(fog, t_mid)
            draws = sample_gain(
                fog_xy,
                scenario.bs_xy,
                channel,
                child_rng(scenario.seed, "bsleg", task.tid, "I", fog),
                n,
            )
            gains_i.append(quantile_gain(draws, eps_1).gain)
        out[(task.tid, "I")] = min(gains_i) if gains_i else 0.0
        src_xy = scenario.position_at(task.source, t_mid)
        draws = sample_gain(
            scenario.bs_xy,
            src_xy,
            channel,
            child_rng(scenario.seed, "bsleg", task.tid, "II"),
            n,
        )
        out[(task.tid, "II")] = quantile_gain(draws, eps_2).gain
    return out


def _stage(name: str, fn, *args, **kwargs):
    """Run one pipeline stage, prefixing any error message with the stage name."""
    try:
        return fn(*args, **kwargs)
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        first = f"[{name}] {exc.args[0]}" if exc.args else f"[{name}]"
        exc.args = (first,) + exc.args[1:]
        raise


def run_point(
    base: Scenario,
    approach: str,
    sweep_param: str | None = None,
    sweep_value: float = math.nan,
    eval_draws: int = 2000,
) -> PointResult:
    """Full chain for one (approach, sweep value) cell."""
    approach_l = approach.lower()
    scenario = _stage("scenario", scenario_for_point, base, sweep_param, sweep_value)
    frames = _stage("frames", scenario_frames, scenario)
    trrg = _stage("graph", build_trrg, scenario, frames)
    schedule, pairing = _stage("schedule", schedule_and_pair, scenario, trrg)
    robust = approach_l != "norobust"
    powers, active = _stage(
        "power", allocate_powers, scenario, trrg, schedule, pairing, robust
    )
    caps = _stage("capacity", arc_capacities, trrg, schedule, powers)

    failed: set[Arc] = set()
    if approach_l == "norobust":
        one_draw = realized_violations(scenario, active, 1, "realize")
        failed = {arc for arc, bad in one_draw.items() if bad}
    caps = _stage("mask", baseline_mask, trrg, caps, approach_l, frozenset(failed))

    gq = _stage("bs-legs", bs_quantile_gains, scenario, frames, trrg)
    program = _stage(
        "flow-build", build_program, trrg, caps, list(scenario.tasks), scenario.channel, gq
    )
    solution = _stage("flow-solve", solve, program)

    outage = math.nan
    if active and eval_draws > 0:
        counts = realized_violations(scenario, active, eval_draws, "outage")
        outage = sum(counts.values()) / (eval_draws * len(active))
    coverage = (
        float(np.mean([training_coverage(p.uset, p.samples) for p in active]))
        if active and robust
        else math.nan
    )
    consumed = (
        sum(p.power.p_link_watts + p.power.p_av_watts for p in active)
        + solution.bs_power_watts
    )
    return PointResult(
        approach=approach_l,
        sweep_param=sweep_param or "",
        sweep_value=sweep_value,
        frames=frames,
        trrg=trrg,
        schedule=schedule,
        pairing=pairing,
        pair_powers=powers,
        capacities=caps,
        solution=solution,
        active=active,
        av_outage=outage,
        coverage=coverage,
        consumed_power_watts=consumed,
    )


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, ".10g")
    return str(value)


def point_row(point: PointResult) -> dict[str, str]:
    scheduled = sum(len(v) for v in point.schedule.values())
    return {
        "approach": point.approach,
        "sweep_param": point.sweep_param,
        "value": _fmt(point.sweep_value),
        "throughput_bits": _fmt(point.solution.throughput_bits),
        "consumed_power_watts": _fmt(point.consumed_power_watts),
        "objective": _fmt(point.solution.objective),
        "outage_rate": _fmt(point.av_outage),
        "frames": str(len(point.frames)),
        "scheduled_links": str(scheduled),
        "active_links": str(len(point.active)),
        "bs_power_watts": _fmt(point.solution.bs_power_watts),
        "training_coverage": _fmt(point.coverage),
        "flow_iterations": str(point.solution.iterations),
        "kkt_stationarity": _fmt(point.solution.kkt.get("stationarity", math.nan)),
        "kkt_primal": _fmt(point.solution.kkt.get("primal", math.nan)),
        "kkt_complementarity": _fmt(point.solution.kkt.get("complementarity", math.nan)),
    }


def results_csv(rows: list[dict[str, str]]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(row.get(col, "") for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _point_task(args) -> PointResult:
    base, approach, sweep_param, value, eval_draws = args
    return run_point(base, approach, sweep_param, value, eval_draws)


def run_experiment(
    base: Scenario,
    approaches: list[str],
    sweep_param: str | None = None,
    values: list[float] | None = None,
    eval_draws: int = 2000,
    workers: int = 1,
) -> list[PointResult]:
    """All (approach, value) cells in deterministic order.

    Workers > 1 fan the cells over processes; collection order is fixed by
    the task list, so the output is identical for any worker count.
    """
    if sweep_param is not None and sweep_param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {sweep_param!r}")
    for approach in approaches:
        a = approach.lower()
        if a != "robust" and a != "norobust" and a != "withoutcarry" and not a.endswith("only"):
            raise ValueError(f"unknown approach {approach!r}")
    cells = [
        (base, approach, sweep_param, value, eval_draws)
        for approach in approaches
        for value in (values if values is not None else [math.nan])
    ]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_point_task, cells))
    return [_point_task(cell) for cell in cells]


def flow_dump_name(point: PointResult) -> str:
    parts = ["flows", point.approach]
    if point.sweep_param:
        parts.append(point.sweep_param)
        parts.append(_fmt(point.sweep_value).replace(".", "p").replace("-", "m"))
    return "_".join(parts) + ".csv"


def point_flow_dump(point: PointResult, base: Scenario) -> str:
    scenario = scenario_for_point(
        base, point.sweep_param or None, point.sweep_value
    )
    gq = bs_quantile_gains(scenario, point.frames, point.trrg)
    program = build_program(
        point.trrg, point.capacities, list(scenario.tasks), scenario.channel, gq
    )
    return dump_solution(point.solution, program)
