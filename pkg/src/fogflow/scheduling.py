"""Per-frame link scheduling: conflict graph and max-weight independent set.

Two communication arcs of one frame conflict when they share a vehicle in any
role: a vehicle cannot feed two links, receive two links, or relay (receive
and transmit) at once, since each carries a single radio. The scheduler
enumerates all maximal independent sets of the conflict graph (Bron-Kerbosch
with pivoting, run on the complement adjacency) and activates the one with
the largest total channel-to-noise weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .trrg import Arc

MAX_CONFLICT_NODES = 32


class SchedulerError(RuntimeError):
    pass


def _arcs_conflict(a: Arc, b: Arc) -> bool:
    ends_a = {a.tail.vid, a.head.vid}
    ends_b = {b.tail.vid, b.head.vid}
    return bool(ends_a & ends_b)


@dataclass
class ConflictGraph:
    arcs: list[Arc]  # canonical order: (frame, tail id, head id)
    weights: list[float]
    adj: list[set[int]]

    @property
    def n(self) -> int:
        return len(self.arcs)


def build_conflict_graph(arcs: list[Arc], weights: dict[Arc, float]) -> ConflictGraph:
    """Canonically ordered conflict graph for one frame's communication arcs."""
    order = sorted(arcs, key=lambda a: (a.frame, a.tail.vid, a.head.vid))
    missing = [a.label() for a in order if a not in weights]
    if missing:
        raise SchedulerError(f"missing weights for arcs: {missing}")
    adj: list[set[int]] = [set() for _ in order]
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if _arcs_conflict(order[i], order[j]):
                adj[i].add(j)
                adj[j].add(i)
    return ConflictGraph(arcs=order, weights=[weights[a] for a in order], adj=adj)


def maximal_independent_sets(
    graph: ConflictGraph, node_cap: int = MAX_CONFLICT_NODES
) -> list[tuple[int, ...]]:
    """All maximal independent sets, as sorted index tuples in canonical order.

    Runs Bron-Kerbosch with pivoting over the complement graph, whose maximal
    cliques are exactly the maximal independent sets here. Refuses frames with
    more than node_cap links since enumeration is exponential in the worst case.
    """
    n = graph.n
    if n > node_cap:
        raise SchedulerError(
            f"conflict graph has {n} links, above the enumeration cap of "
            f"{node_cap}; split the frame or raise the cap explicitly"
        )
    if n == 0:
        return [()]
    comp = [set(range(n)) - graph.adj[i] - {i} for i in range(n)]
    out: list[tuple[int, ...]] = []

    def expand(r: set[int], p: set[int], x: set[int]):
        if not p and not x:
            out.append(tuple(sorted(r)))
            return
        pivot = max(p | x, key=lambda v: len(p & comp[v]))
        for v in sorted(p - comp[pivot]):
            expand(r | {v}, p & comp[v], x & comp[v])
            p = p - {v}
            x = x | {v}

    expand(set(), set(range(n)), set())
    out.sort()
    return out


def select_schedule(graph: ConflictGraph, node_cap: int = MAX_CONFLICT_NODES) -> tuple[int, ...]:
    """Pick the maximal independent set with the largest total weight.

    Ties resolve to the lexicographically smallest index tuple, which is the
    smallest arc-id sequence under the canonical arc order.
    """
    candidates = maximal_independent_sets(graph, node_cap=node_cap)
    best: tuple[int, ...] | None = None
    best_weight = -math.inf
    for cand in candidates:  # lexicographic order, so the first maximum wins ties
        w = sum(graph.weights[i] for i in cand)
        if w > best_weight:
            best, best_weight = cand, w
    assert best is not None
    return best


def schedule_frame(
    arcs: list[Arc], weights: dict[Arc, float], node_cap: int = MAX_CONFLICT_NODES
) -> list[Arc]:
    """Convenience wrapper: conflict graph, enumeration, selection in one call."""
    if not arcs:
        return []
    graph = build_conflict_graph(arcs, weights)
    chosen = select_schedule(graph, node_cap=node_cap)
    return [graph.arcs[i] for i in chosen]
