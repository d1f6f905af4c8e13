"""Interference matrices and the min-crosstalk subchannel assignment."""

import itertools

import numpy as np
import pytest
from conftest import build_scenario

from fogflow.oracles import assignment_bruteforce
from fogflow.scenario import VehicleSpec, nominal_gain, with_channel
from fogflow.subchannel import AssignmentError, assign, assignment_cost, interference_matrix
from fogflow.trrg import Arc, vehicle_vertex


def one_link_scenario(avs):
    s = build_scenario(
        [
            VehicleSpec("tx", "perceptual", 0.0, 0.0, 0.0),
            VehicleSpec("rx", "fog", 50.0, 0.0, 0.0, compute_bits=1.0),
        ],
        avs=avs,
    )
    from fogflow.scenario import contact_frames

    frames = contact_frames(s)
    arc = Arc("communication", vehicle_vertex("tx", 1), vehicle_vertex("rx", 1), 1)
    return s, frames[0], [arc]


def test_av_next_to_receiver_dominates_row():
    s, frame, links = one_link_scenario(
        {"near": (52.0, 0.0), "far": (500.0, 0.0), "mid": (150.0, 0.0)}
    )
    m = interference_matrix(s, frame, links)
    assert m.shape == (1, 3)
    assert m[0, 0] == max(m[0])


def test_noise_doubling_halves_matrix():
    avs = {"a": (80.0, 10.0), "b": (20.0, 30.0)}
    s, frame, links = one_link_scenario(avs)
    m1 = interference_matrix(s, frame, links)
    s2 = with_channel(s, bandwidth_hz=2.0 * s.channel.bandwidth_hz)
    m2 = interference_matrix(s2, frame, links)
    assert np.allclose(m2, m1 / 2.0, rtol=1e-12)


def test_reference_frame_matrix_recomputed(reference, robust_point):
    frame = robust_point.frames[0]
    links = robust_point.schedule[1]
    m = interference_matrix(reference, frame, links)
    sigma2 = reference.channel.noise_watts
    for i, arc in enumerate(links):
        rx_xy = reference.position_at(arc.head.vid, frame.midpoint)
        for j, av_xy in enumerate(reference.avs.values()):
            assert np.isclose(m[i, j], nominal_gain(av_xy, rx_xy) / sigma2, rtol=1e-12)


def test_two_by_two_example():
    matching = assign(np.array([[1.0, 2.0], [3.0, 1.0]]))
    assert matching == {0: 0, 1: 1}
    assert assignment_cost(np.array([[1.0, 2.0], [3.0, 1.0]]), matching) == 2.0


def test_single_link_picks_cheapest_column():
    assert assign(np.array([[3.0, 1.0, 2.0]])) == {0: 1}


def test_matches_bruteforce_on_random_squares():
    rng = np.random.default_rng(23)
    for case in range(50):
        cost = rng.uniform(0.0, 10.0, size=(6, 6))
        if case % 3 == 0:
            cost = np.floor(cost)  # integer ties
        fast = assign(cost)
        slow = assignment_bruteforce(cost)
        assert np.isclose(
            assignment_cost(cost, fast), assignment_cost(cost, slow), rtol=1e-9
        )
        assert fast == slow  # shared lexicographic tie-break


def test_rectangular_injective_and_complete():
    rng = np.random.default_rng(5)
    for r, c in ((2, 5), (5, 2), (4, 4), (1, 7), (7, 1)):
        cost = rng.uniform(0.0, 1.0, size=(r, c))
        matching = assign(cost)
        assert len(matching) == min(r, c)
        assert len(set(matching.values())) == len(matching)
        assert all(0 <= i < r and 0 <= j < c for i, j in matching.items())


def test_total_beats_every_permutation():
    rng = np.random.default_rng(31)
    for n in (2, 3, 5, 7):
        cost = rng.uniform(0.0, 5.0, size=(n, n))
        best = assignment_cost(cost, assign(cost))
        for perm in itertools.permutations(range(n)):
            total = sum(cost[i, perm[i]] for i in range(n))
            assert best <= total + 1e-9


def test_relabeling_equivariance():
    rng = np.random.default_rng(41)
    cost = rng.uniform(0.0, 1.0, size=(5, 5))  # continuous: ties have measure zero
    base = set(assign(cost).items())
    for _ in range(5):
        pi = rng.permutation(5)
        tau = rng.permutation(5)
        permuted = cost[np.ix_(pi, tau)]
        mapped = {(int(pi[i]), int(tau[j])) for i, j in assign(permuted).items()}
        assert mapped == base


def test_assign_input_validation():
    assert assign(np.zeros((0, 3))) == {}
    with pytest.raises(AssignmentError):
        assign(np.array([1.0, 2.0]))
    with pytest.raises(AssignmentError):
        assign(np.array([[np.inf, 1.0], [1.0, 1.0]]))


def test_no_avs_empty_matrix():
    s, frame, links = one_link_scenario({})
    m = interference_matrix(s, frame, links)
    assert m.shape == (1, 0)
    assert assign(m) == {}
