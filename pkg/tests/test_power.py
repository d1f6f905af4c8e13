"""Pair power bisection, arc capacity table, power CSV dump."""

import math

import numpy as np
import pytest
from conftest import build_scenario

from fogflow.oracles import pair_power_grid
from fogflow.power import (
    BISECTION_ITER_CAP,
    PairPower,
    arc_capacities,
    pair_capacity_bps,
    powers_csv,
    solve_pair,
)
from fogflow.robust import learn_uncertainty_set, nominal_set, soc_margin
from fogflow.scenario import Frame, Task, VehicleSpec, load_scenario, nominal_gain
from fogflow.trrg import ALPHA, Arc, build_trrg, vehicle_vertex
from fogflow.pipeline import allocate_powers, schedule_and_pair, scenario_frames

from conftest import CONFIG

SIGMA2 = 10.0 ** -13.4  # -174 dBm/Hz over 10 MHz


def random_uset(rng, scale=1.0):
    base = 10.0 ** rng.uniform(-11, -6, size=2) * scale
    rel = float(rng.uniform(0.05, 0.3))
    samples = base * np.maximum(1.0 + rel * rng.standard_normal((400, 2)), 0.0)
    return learn_uncertainty_set(samples, 0.01)


def test_capacity_formula():
    assert pair_capacity_bps(0.0, 1.0, 5.0, 0.5, 1.0, 1e7) == 0.0
    # SINR = 1*5 / (1*0.5 + 1) = 10/3
    expected = 1e7 * math.log2(1.0 + 10.0 / 3.0)
    assert math.isclose(pair_capacity_bps(1.0, 1.0, 5.0, 0.5, 1.0, 1e7), expected, rel_tol=1e-12)


def test_solve_pair_point_example():
    uset = nominal_set([2.0, 1.0])
    got = solve_pair(5.0, 0.5, uset, 1.0, 1.0, 1e7, 1.0, 1.0)
    assert got.link_active
    assert math.isclose(got.p_av_watts, 0.99951171875, rel_tol=1e-12)
    assert math.isclose(got.p_link_watts, 0.9990234375, rel_tol=1e-12)
    assert got.iterations == 11
    # both powers sit within zeta of the corner p_link = p_av = 1
    assert abs(got.p_link_watts - 1.0) <= 2e-3
    corner = pair_capacity_bps(1.0, 1.0, 5.0, 0.5, 1.0, 1e7)
    assert abs(got.capacity_bps - corner) / corner <= 1e-3
    # deterministic set: p_link equals the closed-form protection limit
    closed = (got.p_av_watts * 2.0 / 1.0 - 1.0) / 1.0
    assert abs(got.p_link_watts - min(closed, 1.0)) <= 1e-3


def test_solve_pair_hopeless_av():
    uset = nominal_set([2.0, 1.0])
    got = solve_pair(5.0, 0.5, uset, 1e12, 1.0, 1e7, 1.0, 1.0)
    assert got == PairPower(0.0, 1.0, 0.0, 0, False)


def test_solve_pair_rejects_bad_zeta():
    with pytest.raises(ValueError):
        solve_pair(5.0, 0.5, nominal_set([2.0, 1.0]), 1.0, 1.0, 1e7, 1.0, 1.0, zeta=0.0)


def test_solve_pair_random_instances_feasible():
    rng = np.random.default_rng(41)
    for _ in range(40):
        uset = random_uset(rng)
        g_link = 10.0 ** rng.uniform(-10, -6)
        g_cross = 10.0 ** rng.uniform(-12, -8)
        gamma = float(rng.uniform(1.0, 30.0))
        p_max_v = float(rng.uniform(0.5, 2.0))
        p_max_av = float(rng.uniform(0.5, 2.0))
        got = solve_pair(g_link, g_cross, uset, gamma, SIGMA2, 1e7, p_max_v, p_max_av)
        assert got.iterations <= BISECTION_ITER_CAP
        assert 0.0 <= got.p_av_watts <= p_max_av + 1e-12
        assert 0.0 <= got.p_link_watts <= p_max_v + 1e-12
        if got.link_active:
            margin = soc_margin(got.p_av_watts, got.p_link_watts, uset, gamma, SIGMA2)
            assert margin >= -1e-9 * SIGMA2
            assert got.capacity_bps > 0.0
        else:
            assert got.p_link_watts == 0.0 and got.capacity_bps == 0.0


def test_solve_pair_tracks_grid_oracle():
    rng = np.random.default_rng(57)
    for _ in range(15):
        uset = random_uset(rng)
        g_link = 10.0 ** rng.uniform(-10, -6)
        g_cross = 10.0 ** rng.uniform(-12, -8)
        gamma = float(rng.uniform(1.0, 30.0))
        p_max_v = float(rng.uniform(0.5, 2.0))
        p_max_av = float(rng.uniform(0.5, 2.0))
        got = solve_pair(g_link, g_cross, uset, gamma, SIGMA2, 1e7, p_max_v, p_max_av)
        _, _, best = pair_power_grid(
            g_link, g_cross, uset, gamma, SIGMA2, 1e7, p_max_v, p_max_av
        )
        if best > 0.0:
            assert abs(got.capacity_bps - best) / best <= 1e-3
        else:
            assert got.capacity_bps == 0.0


def test_capacity_monotone_in_power_caps():
    rng = np.random.default_rng(71)
    uset = random_uset(rng, scale=1e2)
    g_link, g_cross = 1e-7, 1e-9
    caps = [0.25, 0.5, 1.0, 2.0]
    by_v = [solve_pair(g_link, g_cross, uset, 10.0, SIGMA2, 1e7, c, 1.0).capacity_bps for c in caps]
    by_av = [solve_pair(g_link, g_cross, uset, 10.0, SIGMA2, 1e7, 1.0, c).capacity_bps for c in caps]
    tol = 2e-3  # zeta band melts the exact corner
    for seq in (by_v, by_av):
        assert all(b >= a * (1.0 - tol) for a, b in zip(seq, seq[1:]))


# ---------------------------------------------------------------------------
# arc capacity table


def two_frame_graph():
    vehicles = [
        VehicleSpec("p", "perceptual", 0.0, 0.0, 0.0),
        VehicleSpec("r", "relay", 10.0, 0.0, 0.0, cache_bits=5e6),
        VehicleSpec("f", "fog", 20.0, 0.0, 0.0, compute_bits=9e6),
    ]
    s = build_scenario(vehicles, tasks=[Task("t", "p", 2)])
    return build_trrg(s, [Frame(1, 0.0, 1.0), Frame(2, 1.0, 2.0)])


def test_arc_capacities_families():
    trrg = two_frame_graph()
    comm = trrg.comm_arcs_in_frame(1)
    chosen = next(a for a in comm if (a.tail.vid, a.head.vid) == ("p", "r"))
    power = PairPower(0.5, 0.8, 1e7, 3, True)
    caps = arc_capacities(trrg, {1: [chosen], 2: []}, {chosen: power})
    assert caps[chosen] == 1e7  # 1e7 bps over a 1 s frame
    for arc in trrg.arcs:
        if arc is chosen:
            continue
        if arc.kind == "communication":
            assert caps[arc] == 0.0
        elif arc.kind == "perception":
            assert math.isinf(caps[arc])
        elif arc.kind == "carry":
            assert caps[arc] == 5e6
        else:
            assert caps[arc] == 9e6


def test_arc_capacities_inactive_pair_is_zero():
    trrg = two_frame_graph()
    comm = trrg.comm_arcs_in_frame(1)
    chosen = comm[0]
    dead = PairPower(0.0, 1.0, 0.0, 7, False)
    caps = arc_capacities(trrg, {1: [chosen], 2: []}, {chosen: dead})
    assert caps[chosen] == 0.0


def test_reference_capacities_match_pair_rates():
    scenario = load_scenario(str(CONFIG))
    frames = scenario_frames(scenario)
    trrg = build_trrg(scenario, frames)
    schedule, pairing = schedule_and_pair(scenario, trrg)
    powers, active = allocate_powers(scenario, trrg, schedule, pairing, robust=True)
    caps = arc_capacities(trrg, schedule, powers)
    durations = {f.index: f.duration for f in frames}
    checked = 0
    for arc, power in powers.items():
        if power.link_active:
            assert math.isclose(
                caps[arc], power.capacity_bps * durations[arc.frame], rel_tol=1e-12
            )
            checked += 1
    assert checked == len(active) > 0


# ---------------------------------------------------------------------------
# CSV dump


def test_powers_csv_format():
    a1 = Arc("communication", vehicle_vertex("v1", 1), vehicle_vertex("v2", 1), 1)
    a2 = Arc("communication", vehicle_vertex("v4", 2), vehicle_vertex("v5", 2), 2)
    text = powers_csv({
        a2: PairPower(0.25, 1.0, 2e6, 5, True),
        a1: PairPower(0.5, 0.75, 1.25e7, 9, True),
    })
    lines = text.strip().split("\n")
    assert lines[0] == "frame,tx,rx,p_link_watts,p_av_watts,capacity_bps"
    assert lines[1] == "1,v1,v2,0.5,0.75,12500000"
    assert lines[2] == "2,v4,v5,0.25,1,2000000"
    for row in lines[1:]:
        fields = row.split(",")
        assert len(fields) == 6
        float(fields[3]), float(fields[4]), float(fields[5])
