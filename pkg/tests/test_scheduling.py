"""Conflict graphs, maximal independent sets, max-weight schedule selection."""

import numpy as np
import pytest

from fogflow.oracles import mwis_bruteforce
from fogflow.scheduling import (
    ConflictGraph,
    SchedulerError,
    build_conflict_graph,
    maximal_independent_sets,
    schedule_frame,
    select_schedule,
)
from fogflow.trrg import Arc, vehicle_vertex


def link(tx, rx, frame=1):
    return Arc("communication", vehicle_vertex(tx, frame), vehicle_vertex(rx, frame), frame)


def graph_for(arcs, weights):
    return build_conflict_graph(arcs, dict(zip(arcs, weights)))


def test_shared_transmitter_conflicts():
    g = graph_for([link("1", "2"), link("1", "3")], [1.0, 1.0])
    assert g.adj == [{1}, {0}]


def test_relay_receive_transmit_conflicts():
    g = graph_for([link("1", "2"), link("2", "3")], [1.0, 1.0])
    assert g.adj == [{1}, {0}]


def test_shared_receiver_conflicts():
    g = graph_for([link("1", "3"), link("2", "3")], [1.0, 1.0])
    assert g.adj == [{1}, {0}]


def test_disjoint_links_do_not_conflict():
    g = graph_for([link("1", "2"), link("3", "4")], [1.0, 1.0])
    assert g.adj == [set(), set()]


def test_path_graph_maximal_sets():
    # a-b conflict, b-c conflict, a-c independent
    g = graph_for([link("1", "2"), link("2", "3"), link("3", "4")], [1.0] * 3)
    assert maximal_independent_sets(g) == [(0, 2), (1,)]


def test_edgeless_graph_single_set():
    g = graph_for([link("1", "2"), link("3", "4"), link("5", "6")], [1.0] * 3)
    assert maximal_independent_sets(g) == [(0, 1, 2)]


def test_complete_graph_singletons():
    g = graph_for([link("1", "2"), link("1", "3"), link("1", "4"), link("1", "5")], [1.0] * 4)
    assert maximal_independent_sets(g) == [(0,), (1,), (2,), (3,)]


def test_weight_selection_on_path():
    arcs = [link("1", "2"), link("2", "3"), link("3", "4")]
    assert select_schedule(graph_for(arcs, [1.0, 5.0, 1.0])) == (1,)
    assert select_schedule(graph_for(arcs, [3.0, 5.0, 3.0])) == (0, 2)


def test_weight_tie_goes_lexicographic():
    g = graph_for([link("1", "2"), link("1", "3")], [2.0, 2.0])
    assert select_schedule(g) == (0,)


def test_random_graphs_match_bruteforce():
    rng = np.random.default_rng(17)
    for case in range(30):
        n = 12
        ids = [str(i) for i in range(8)]
        arcs = []
        seen = set()
        while len(arcs) < n:
            tx, rx = rng.choice(ids, size=2, replace=False)
            if (tx, rx) not in seen:
                seen.add((tx, rx))
                arcs.append(link(tx, rx))
        if case % 2:
            weights = rng.uniform(0.1, 10.0, size=n)
        else:
            weights = rng.integers(1, 4, size=n).astype(float)  # force ties
        g = graph_for(arcs, list(weights))
        assert select_schedule(g) == mwis_bruteforce(g)


def test_node_cap_enforced():
    arcs = [link(f"a{i}", f"b{i}") for i in range(33)]
    with pytest.raises(SchedulerError):
        schedule_frame(arcs, {a: 1.0 for a in arcs})
    small = [link(f"a{i}", f"b{i}") for i in range(6)]
    g = graph_for(small, [1.0] * 6)
    with pytest.raises(SchedulerError):
        maximal_independent_sets(g, node_cap=5)


def test_missing_weights_rejected():
    arcs = [link("1", "2"), link("3", "4")]
    with pytest.raises(SchedulerError, match="missing weights"):
        build_conflict_graph(arcs, {arcs[0]: 1.0})


def test_schedule_frame_empty():
    assert schedule_frame([], {}) == []


def test_reference_schedule_is_conflict_free_and_maximal(robust_point):
    trrg = robust_point.trrg
    for frame_index, chosen in robust_point.schedule.items():
        vids = [v for a in chosen for v in (a.tail.vid, a.head.vid)]
        assert len(vids) == len(set(vids))  # no shared tx, rx or relay role
        chosen_set = set(chosen)
        for arc in trrg.comm_arcs_in_frame(frame_index):
            if arc in chosen_set:
                continue
            clash = any(
                {arc.tail.vid, arc.head.vid} & {c.tail.vid, c.head.vid}
                for c in chosen
            )
            assert clash  # maximality: every left-out link conflicts


def test_empty_conflict_graph():
    g = ConflictGraph(arcs=[], weights=[], adj=[])
    assert maximal_independent_sets(g) == [()]
