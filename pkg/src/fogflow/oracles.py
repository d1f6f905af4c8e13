"""Slow reference implementations used to cross-check the optimizers.

Everything here trades speed for obviousness: exhaustive subset or
permutation enumeration and plain bisection/grid search. Tests (and the
`oracle` CLI subcommand) compare the fast paths against these.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .robust import UncertaintySet, soc_margin
from .scheduling import ConflictGraph

_BRUTE_NODE_LIMIT = 20
_BRUTE_PERM_LIMIT = 8


def mwis_bruteforce(graph: ConflictGraph) -> tuple[int, ...]:
    """Max-weight maximal independent set by 2^n bitmask enumeration.

    Mirrors the scheduler contract exactly: only maximal sets compete and
    weight ties go to the lexicographically smallest index tuple.
    """
    n = graph.n
    if n > _BRUTE_NODE_LIMIT:
        raise ValueError(f"brute force capped at {_BRUTE_NODE_LIMIT} nodes, got {n}")
    adj_masks = [0] * n
    for i in range(n):
        for j in graph.adj[i]:
            adj_masks[i] |= 1 << j

    size = 1 << n
    full = size - 1
    indep = [False] * size
    cover = [0] * size  # members plus their neighborhoods, for maximality
    indep[0] = True
    for mask in range(1, size):
        low = mask & -mask
        i = low.bit_length() - 1
        rest = mask ^ low
        if indep[rest] and not (adj_masks[i] & rest):
            indep[mask] = True
            cover[mask] = cover[rest] | low | adj_masks[i]

    best: tuple[int, ...] | None = None
    best_weight = -math.inf
    for mask in range(size):
        if not indep[mask] or cover[mask] != full:
            continue
        cand = tuple(i for i in range(n) if mask >> i & 1)
        w = sum(graph.weights[i] for i in cand)  # same summation order as the scheduler
        if w > best_weight or (w == best_weight and best is not None and cand < best):
            best, best_weight = cand, w
    assert best is not None  # the empty graph still has the empty maximal set
    return best


def assignment_bruteforce(cost: np.ndarray) -> dict[int, int]:
    """Min-cost matching by permutation enumeration, same padding and
    tie-break semantics as the fast assignment."""
    cost = np.asarray(cost, dtype=float)
    r, c = cost.shape
    n = max(r, c)
    if n > _BRUTE_PERM_LIMIT:
        raise ValueError(f"brute force capped at {_BRUTE_PERM_LIMIT}x{_BRUTE_PERM_LIMIT}")
    padded = np.zeros((n, n))
    padded[:r, :c] = cost

    best_total = math.inf
    totals: list[tuple[float, tuple[int, ...]]] = []
    for perm in itertools.permutations(range(n)):
        total = float(sum(padded[i, perm[i]] for i in range(n)))
        totals.append((total, perm))
        best_total = min(best_total, total)
    tol = 1e-9 * max(1.0, abs(best_total))
    tied = [perm for total, perm in totals if total <= best_total + tol]
    winner = min(tied)
    return {i: winner[i] for i in range(r) if winner[i] < c}


def link_power_bisect(
    p_av: float,
    uset: UncertaintySet,
    gamma_v_th: float,
    sigma2: float,
    cap: float,
    iters: int = 200,
) -> float:
    """Largest feasible link power by direct margin bisection."""
    if soc_margin(p_av, 0.0, uset, gamma_v_th, sigma2) < 0.0:
        return 0.0
    hi = cap
    if math.isinf(hi):
        hi = max(p_av, sigma2, 1e-12)
        while soc_margin(p_av, hi, uset, gamma_v_th, sigma2) >= 0.0:
            hi *= 2.0
            if hi > 1e30:
                return math.inf
    if soc_margin(p_av, hi, uset, gamma_v_th, sigma2) >= 0.0:
        return hi
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if soc_margin(p_av, mid, uset, gamma_v_th, sigma2) >= 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def pair_power_grid(
    link_gain_mean: float,
    cross_gain_mean: float,
    uset: UncertaintySet,
    gamma_v_th: float,
    sigma2: float,
    bandwidth_hz: float,
    p_max_v: float,
    p_max_av: float,
    n_grid: int = 1000,
    zoom_passes: int = 2,
    bisect_iters: int = 80,
) -> tuple[float, float, float]:
    """Best (p_link, p_av, capacity) by grid search over the power box.

    Feasibility comes straight from the ellipsoid definition (worst-case slack
    q.center - |q.B| - sigma2), not from the fast path's boundary algebra. The
    rate is increasing in the link power and the slack is concave in it, so on
    each AV-power gridline the best feasible link power is the larger root of
    slack = 0 (or the cap); that root is pinned by plain bisection, which makes
    this a grid exactly on the AV axis and exhaustive on the link axis. Zoom
    passes shrink the AV interval around the winner.
    """
    b = uset.shape
    b11 = float(b[0] @ b[0])
    b12 = float(b[0] @ b[1])
    b22 = float(b[1] @ b[1])
    g1, g2 = (float(x) for x in uset.center)

    def margin(c: np.ndarray, pl: np.ndarray) -> np.ndarray:
        norm2 = c * c * b11 - 2.0 * c * pl * b12 + pl * pl * b22
        return c * g1 - pl * g2 - np.sqrt(np.maximum(norm2, 0.0)) - sigma2

    def scan(av_lo: float, av_hi: float):
        p_av = np.linspace(av_lo, av_hi, n_grid + 1)
        c = p_av / gamma_v_th
        alive = margin(c, np.zeros_like(c)) >= 0.0
        at_cap = alive & (margin(c, np.full_like(c, p_max_v)) >= 0.0)
        lo = np.zeros_like(c)
        hi = np.full_like(c, p_max_v)
        for _ in range(bisect_iters):
            mid = 0.5 * (lo + hi)
            good = margin(c, mid) >= 0.0
            lo = np.where(good, mid, lo)
            hi = np.where(good, hi, mid)
        frontier = np.where(at_cap, p_max_v, lo)
        frontier = np.where(alive, frontier, 0.0)
        sinr = frontier * link_gain_mean / (p_av * cross_gain_mean + sigma2)
        rate = bandwidth_hz * np.log2(1.0 + sinr)
        rate = np.where(frontier > 0.0, rate, -np.inf)
        i = int(np.argmax(rate))
        return float(frontier[i]), float(p_av[i]), float(rate[i])

    best = scan(0.0, p_max_av)
    if not math.isfinite(best[2]) or best[2] <= 0.0:
        return (0.0, 0.0, 0.0)
    av_step = p_max_av / n_grid
    for _ in range(zoom_passes):
        av_lo, av_hi = max(best[1] - av_step, 0.0), min(best[1] + av_step, p_max_av)
        cand = scan(av_lo, av_hi)
        if cand[2] > best[2]:
            best = cand
        av_step = (av_hi - av_lo) / n_grid
    return best
