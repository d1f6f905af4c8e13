"""Transmit power allocation for a (V2V link, AV subchannel) pair.

For a fixed AV power the largest robust-feasible link power has a closed
form, and the resulting link capacity grows with the AV power until the link
hits its own cap, after which extra AV power is pure interference. The
allocator therefore bisects the AV power toward the point where the
unclamped link-power optimum crosses the link cap, within a zeta band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .robust import UncertaintySet, max_link_power, min_av_power, soc_feasible, soc_margin
from .trrg import Arc, Trrg

BISECTION_ITER_CAP = 64


@dataclass(frozen=True)
class PairPower:
    p_link_watts: float
    p_av_watts: float
    capacity_bps: float
    iterations: int
    link_active: bool


def pair_capacity_bps(
    p_link: float,
    p_av: float,
    link_gain_mean: float,
    cross_gain_mean: float,
    sigma2: float,
    bandwidth_hz: float,
) -> float:
    """Mean-gain link rate: interference from the AV plus thermal noise."""
    if p_link <= 0.0:
        return 0.0
    sinr = p_link * link_gain_mean / (p_av * cross_gain_mean + sigma2)
    return bandwidth_hz * math.log2(1.0 + sinr)


def solve_pair(
    link_gain_mean: float,
    cross_gain_mean: float,
    uset: UncertaintySet,
    gamma_v_th: float,
    sigma2: float,
    bandwidth_hz: float,
    p_max_v: float,
    p_max_av: float,
    zeta: float = 1e-3,
) -> PairPower:
    """Joint (link, AV) power via bisection on the AV power.

    Returns the last feasible pair and its capacity; when the AV cannot be
    protected at any link power the link is deactivated and the AV falls back
    to the smallest power meeting its own constraint alone (its cap if even
    that fails).
    """
    if zeta <= 0.0:
        raise ValueError("zeta must be > 0")
    if not soc_feasible(p_max_av, 0.0, uset, gamma_v_th, sigma2):
        return PairPower(0.0, p_max_av, 0.0, 0, False)

    p_av = p_max_av
    p_link_unc = max_link_power(p_av, uset, gamma_v_th, sigma2, cap=math.inf)
    iterations = 0
    if p_link_unc >= p_max_v - zeta:
        # the link would hit its cap before the AV hits its own: bisect the
        # AV power toward the crossing, branching on p_link vs cap +/- zeta
        p_lo, p_hi = 0.0, p_max_av
        while iterations < BISECTION_ITER_CAP:
            iterations += 1
            p_av = 0.5 * (p_lo + p_hi)
            p_link_unc = max_link_power(p_av, uset, gamma_v_th, sigma2, cap=math.inf)
            if p_link_unc > p_max_v + zeta:
                p_hi = p_av
            elif p_link_unc < p_max_v - zeta:
                p_lo = p_av
            else:
                break
            if p_hi - p_lo <= 1e-15 * p_max_av:
                break
        if p_link_unc < p_max_v - zeta:
            # interval exhausted from the infeasible side; back to the last
            # point known to support the capped link power
            p_av = p_hi
            p_link_unc = max_link_power(p_av, uset, gamma_v_th, sigma2, cap=math.inf)

    p_link = min(p_link_unc, p_max_v)
    if p_link <= 0.0:
        return PairPower(0.0, min_av_power(uset, gamma_v_th, sigma2, p_max_av), 0.0, iterations, False)
    if soc_margin(p_av, p_link, uset, gamma_v_th, sigma2) < 0.0:
        p_link = max_link_power(p_av, uset, gamma_v_th, sigma2, cap=p_max_v)
        if p_link <= 0.0:
            return PairPower(
                0.0, min_av_power(uset, gamma_v_th, sigma2, p_max_av), 0.0, iterations, False
            )
    capacity = pair_capacity_bps(
        p_link, p_av, link_gain_mean, cross_gain_mean, sigma2, bandwidth_hz
    )
    return PairPower(p_link, p_av, capacity, iterations, True)


def powers_csv(pair_powers: dict[Arc, PairPower]) -> str:
    """CSV dump of solved pair powers, one row per communication arc."""
    lines = ["frame,tx,rx,p_link_watts,p_av_watts,capacity_bps"]
    for arc in sorted(pair_powers, key=lambda a: (a.frame, a.tail.vid, a.head.vid)):
        p = pair_powers[arc]
        lines.append(
            f"{arc.frame},{arc.tail.vid},{arc.head.vid},"
            f"{format(p.p_link_watts, '.10g')},{format(p.p_av_watts, '.10g')},"
            f"{format(p.capacity_bps, '.10g')}"
        )
    return "\n".join(lines) + "\n"


def arc_capacities(
    trrg: Trrg,
    schedule: dict[int, list[Arc]],
    pair_powers: dict[Arc, PairPower],
) -> dict[Arc, float]:
    """Per-arc bit capacities for the flow stage.

    Scheduled and subchannel-paired communication arcs carry their pair rate
    times the frame duration; unscheduled or unpaired ones carry nothing.
    Carry and computing arcs keep their scenario constants; perception arcs
    are unbounded.
    """
    frames = {f.index: f for f in trrg.frames}
    caps: dict[Arc, float] = {}
    for arc in trrg.arcs:
        if arc.kind == "communication":
            active = arc in schedule.get(arc.frame, [])
            power = pair_powers.get(arc)
            if active and power is not None and power.link_active:
                caps[arc] = power.capacity_bps * frames[arc.frame].duration
            else:
                caps[arc] = 0.0
        elif arc.kind == "perception":
            caps[arc] = math.inf
        else:
            caps[arc] = float(arc.capacity_bits if arc.capacity_bits is not None else 0.0)
    return caps
