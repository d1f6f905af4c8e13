"""Reduced convex flow program: build, solve, masks, dumps."""

import math

import numpy as np
import pytest
from scipy.optimize import linprog, minimize

from fogflow.flow import (
    FlowError,
    baseline_mask,
    bs_theta_cap_bits,
    build_program,
    dump_solution,
    solve,
)
from fogflow.scenario import ChannelParams, Frame, Task
from fogflow.trrg import ALPHA, OMEGA, Arc, Trrg, vehicle_vertex

CHANNEL = ChannelParams()
GQ_UNIT = {("t", "I"): 1.0, ("t", "II"): 1.0}
TWO_FRAMES = [Frame(1, 0.0, 1.0), Frame(2, 1.0, 2.0)]


def comm(tail, head, frame):
    return Arc("communication", vehicle_vertex(tail, frame), vehicle_vertex(head, frame), frame)


def carry(vid, frame, cap):
    return Arc("carry", vehicle_vertex(vid, frame), vehicle_vertex(vid, frame + 1), frame,
               capacity_bits=cap)


def compute(vid, frame, cap):
    return Arc("computing", vehicle_vertex(vid, frame), OMEGA, frame, capacity_bits=cap)


def parallel_instance():
    """One source feeding two fogs through arcs of capacity 3 and 5 bits."""
    a = comm("v1", "f1", 1)
    b = comm("v1", "f2", 1)
    c1 = compute("f1", 1, 100.0)
    c2 = compute("f2", 1, 100.0)
    trrg = Trrg(
        frames=TWO_FRAMES,
        roles={"v1": "perceptual", "f1": "fog", "f2": "fog"},
        arcs=[
            Arc("perception", ALPHA, vehicle_vertex("v1", 1), 1, task="t",
                capacity_bits=math.inf),
            a, b, c1, c2,
        ],
    )
    caps = {a: 3.0, b: 5.0, c1: 100.0, c2: 100.0}
    return trrg, caps, [Task("t", "v1", 2)]


def chain_instance():
    """Source, relay cache of 4 bits, fog reached one frame later."""
    c1 = comm("v1", "r", 1)
    hold = carry("r", 1, 4.0)
    c2 = comm("r", "f", 2)
    sink = compute("f", 2, 100.0)
    trrg = Trrg(
        frames=TWO_FRAMES,
        roles={"v1": "perceptual", "r": "relay", "f": "fog"},
        arcs=[c1, hold, c2, sink],
    )
    caps = {c1: 9.0, hold: 4.0, c2: 100.0, sink: 100.0}
    return trrg, caps, [Task("t", "v1", 3)]


def lp_max_throughput(program):
    """Linear relaxation oracle: maximize total injected bits."""
    n = program.n_vars
    c = np.zeros(n)
    for terms in program.mu_terms.values():
        c[terms] = -1.0
    res = linprog(
        c,
        A_ub=program.g_ineq,
        b_ub=program.h_ineq,
        A_eq=program.a_eq if program.a_eq.size else None,
        b_eq=np.zeros(program.a_eq.shape[0]) if program.a_eq.size else None,
        bounds=(None, None),
        method="highs",
    )
    assert res.status == 0
    return -res.fun * program.scale_bits


def slsqp_phi(program):
    """Generic NLP oracle for the minimization objective."""
    n = program.n_vars
    cons = [{
        "type": "ineq",
        "fun": lambda u: program.h_ineq - program.g_ineq @ u,
        "jac": lambda u: -program.g_ineq,
    }]
    if program.a_eq.size:
        cons.append({
            "type": "eq",
            "fun": lambda u: program.a_eq @ u,
            "jac": lambda u: program.a_eq,
        })
    res = minimize(
        program.phi,
        np.full(n, 1e-3),
        jac=lambda u: program.phi_grad_hess(u)[1],
        constraints=cons,
        method="SLSQP",
        options={"maxiter": 400, "ftol": 1e-12},
    )
    assert res.success
    return float(res.fun)


def test_parallel_paths_fill_both_arcs():
    program = build_program(*_unpack(parallel_instance()))
    assert program.n_vars == 2
    solution = solve(program)
    assert solution.status == "optimal"
    lp_opt = lp_max_throughput(program)
    assert math.isclose(lp_opt, 8.0, rel_tol=1e-9)
    assert abs(solution.throughput_bits - lp_opt) <= 1e-3 * (lp_opt + 1.0)
    assert abs(solution.objective - (-slsqp_phi(program))) <= 1e-5
    assert math.isclose(solution.mu_bits[("t", 1)], 8.0, rel_tol=1e-3)
    assert solution.mu_bits[("t", 2)] == 0.0
    inflow = {vid: solution.d_bits[(arc, "t")]
              for arc in program.trrg.arcs_of_kind("computing")
              for vid in [arc.tail.vid]}
    assert math.isclose(inflow["f1"], 3.0, rel_tol=1e-3)
    assert math.isclose(inflow["f2"], 5.0, rel_tol=1e-3)


def test_chain_respects_cache_bottleneck():
    program = build_program(*_unpack(chain_instance()))
    solution = solve(program)
    lp_opt = lp_max_throughput(program)
    assert math.isclose(lp_opt, 4.0, rel_tol=1e-9)
    assert abs(solution.throughput_bits - lp_opt) <= 1e-3 * (lp_opt + 1.0)
    assert abs(solution.objective - (-slsqp_phi(program))) <= 1e-5
    # relay conservation held exactly by the equality rows
    trrg, caps, _ = chain_instance()
    f_in = solution.flows_bits[(comm("v1", "r", 1), "t")]
    f_hold = solution.flows_bits[(carry("r", 1, 4.0), "t")]
    f_out = solution.flows_bits[(comm("r", "f", 2), "t")]
    assert abs(f_in - f_hold) <= 1e-6 * (solution.throughput_bits + 1.0)
    assert abs(f_hold - f_out) <= 1e-6 * (solution.throughput_bits + 1.0)


def _unpack(instance):
    trrg, caps, tasks = instance
    return trrg, caps, tasks, CHANNEL, GQ_UNIT


def test_kkt_residuals_within_tolerance():
    for instance in (parallel_instance(), chain_instance()):
        solution = solve(build_program(*_unpack(instance)))
        assert solution.kkt["stationarity"] <= 1e-6
        assert solution.kkt["primal"] <= 1e-6
        assert solution.kkt["complementarity"] <= 1e-6
        assert solution.kkt["max_ineq_violation"] == 0.0


def test_solve_is_deterministic():
    trrg, caps, tasks = parallel_instance()
    s1 = solve(build_program(trrg, caps, tasks, CHANNEL, GQ_UNIT))
    s2 = solve(build_program(trrg, caps, tasks, CHANNEL, GQ_UNIT))
    assert s1.objective == s2.objective
    assert s1.flows_bits == s2.flows_bits


def test_objective_monotone_and_concave_in_capacity():
    trrg, caps, tasks = parallel_instance()
    b = comm("v1", "f2", 1)

    def obj(cap_b):
        c = dict(caps)
        c[b] = cap_b
        return solve(build_program(trrg, c, tasks, CHANNEL, GQ_UNIT)).objective

    o3, o4, o5 = obj(3.0), obj(4.0), obj(5.0)
    assert o5 >= o4 - 1e-9 and o4 >= o3 - 1e-9
    assert o4 >= 0.5 * (o3 + o5) - 1e-9


def test_no_usable_arcs_gives_baseline_objective():
    trrg, caps, tasks = parallel_instance()
    dead = {arc: 0.0 for arc in caps}
    program = build_program(trrg, dead, tasks, CHANNEL, GQ_UNIT)
    assert program.n_vars == 0
    solution = solve(program)
    assert solution.status == "optimal"
    assert solution.iterations == 0
    assert solution.throughput_bits == 0.0
    assert solution.objective == float(len(tasks))


def test_delay_budget_prunes_all_variables():
    trrg, caps, _ = parallel_instance()
    program = build_program(trrg, caps, [Task("t", "v1", 1)], CHANNEL, GQ_UNIT)
    assert program.n_vars == 0  # no communication arc acts before frame 1 ends


def test_variables_only_on_usable_arcs():
    trrg, caps, tasks = chain_instance()
    program = build_program(trrg, caps, tasks, CHANNEL, GQ_UNIT)
    budget = tasks[0].delay_budget_frames
    for arc, tid in program.var_keys:
        assert tid == "t"
        assert arc.kind in ("communication", "carry")
        assert arc.frame < budget
        assert caps[arc] > 0.0


def test_bs_theta_cap_closed_form():
    assert bs_theta_cap_bits(CHANNEL, 0.0) == 0.0
    gq = 1e-13
    expected = CHANNEL.bandwidth_hz * math.log2(
        1.0 + CHANNEL.p_max_bs_watts * gq / CHANNEL.noise_watts
    )
    assert math.isclose(bs_theta_cap_bits(CHANNEL, gq), expected, rel_tol=1e-12)


def test_bs_theta_cap_binds_throughput():
    # quantile gain small enough that the BS uplink, not the arcs, limits flow
    channel = ChannelParams(w_p=0.0)
    gq = 1e-21
    theta_max = bs_theta_cap_bits(channel, gq)
    assert theta_max < channel.compression_eta * 8.0
    trrg, caps, tasks = parallel_instance()
    gains = {("t", "I"): gq, ("t", "II"): 1.0}
    solution = solve(build_program(trrg, caps, tasks, channel, gains))
    want = theta_max / channel.compression_eta
    assert abs(solution.throughput_bits - want) <= 1e-3 * (want + 1.0)


def test_zero_quantile_gain_disables_task():
    trrg, caps, tasks = parallel_instance()
    gains = {("t", "I"): 0.0, ("t", "II"): 1.0}
    program = build_program(trrg, caps, tasks, CHANNEL, gains)
    assert program.n_vars == 0
    assert solve(program).throughput_bits == 0.0


# ---------------------------------------------------------------------------
# baseline masks


def test_baseline_mask_modes():
    trrg, caps, _ = chain_instance()
    hold = carry("r", 1, 4.0)
    assert baseline_mask(trrg, caps, "robust") == caps
    assert baseline_mask(trrg, caps, "Robust") == caps

    no_carry = baseline_mask(trrg, caps, "withoutcarry")
    assert no_carry[hold] == 0.0
    assert all(no_carry[a] == caps[a] for a in caps if a.kind != "carry")

    keep_r = baseline_mask(trrg, caps, "ronly")
    assert keep_r == caps
    drop_r = baseline_mask(trrg, caps, "xonly")
    assert drop_r[hold] == 0.0


def test_baseline_mask_norobust_zeroes_failed_arcs():
    trrg, caps, _ = parallel_instance()
    a = comm("v1", "f1", 1)
    b = comm("v1", "f2", 1)
    masked = baseline_mask(trrg, caps, "norobust", failed_comm={a})
    assert masked[a] == 0.0 and masked[b] == caps[b]


def test_baseline_mask_rejects_unknown_mode():
    trrg, caps, _ = parallel_instance()
    with pytest.raises(FlowError):
        baseline_mask(trrg, caps, "fancy")
    with pytest.raises(FlowError):
        baseline_mask(trrg, caps, "only")


# ---------------------------------------------------------------------------
# dumps


def test_dump_solution_format():
    program = build_program(*_unpack(parallel_instance()))
    solution = solve(program)
    text = dump_solution(solution, program)
    lines = text.strip().split("\n")
    assert lines[0] == "frame,arc,task,flow_bits,capacity_bits"
    assert lines[-1].startswith("summary,")
    body = lines[1:-1]
    assert len(body) == len(solution.flows_bits) + len(solution.d_bits)
    for row in body:
        frame, arc_label, tid, flow_bits, cap_bits = row.split(",")
        assert int(frame) >= 1 and tid == "t"
        assert float(flow_bits) <= float(cap_bits) * (1.0 + 1e-9) + 1e-9
        kind = arc_label.split(":")[0]
        assert kind in ("communication", "carry", "computing")

    summary = lines[-1].removeprefix("summary,").rstrip(",")
    fields = dict(part.split("=") for part in summary.split(";"))
    assert math.isclose(float(fields["objective"]), solution.objective, rel_tol=1e-10)
    assert math.isclose(
        float(fields["throughput_bits"]), solution.throughput_bits, rel_tol=1e-10
    )
    assert float(fields["bs_power_watts"]) >= 0.0
