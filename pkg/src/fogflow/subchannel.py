"""Subchannel reuse assignment: active V2V links onto AV uplink subchannels.

Each scheduled link reuses exactly one audience vehicle's subchannel and each
subchannel hosts at most one link. The pairing minimizes the summed
interference channel-to-noise ratio of the AV-to-link-receiver crosstalk,
solved with the Hungarian algorithm on the (links x AVs) cost matrix.
"""

from __future__ import annotations

import math

import numpy as np

from .scenario import Frame, Scenario, nominal_gain
from .trrg import Arc

_LEX_REFINE_LIMIT = 20


class AssignmentError(ValueError):
    pass


def interference_matrix(
    scenario: Scenario, frame: Frame, links: list[Arc]
) -> np.ndarray:
    """Crosstalk CNR of each AV at each active link's receiver (links x AVs).

    Gains are the deterministic pathloss means at the frame midpoint, so the
    assignment stage is reproducible independent of channel sampling.
    """
    sigma2 = scenario.channel.noise_watts
    t_mid = frame.midpoint
    av_positions = list(scenario.avs.values())
    rows = []
    for link in links:
        rx_xy = scenario.position_at(link.head.vid, t_mid)
        rows.append([nominal_gain(av_xy, rx_xy) / sigma2 for av_xy in av_positions])
    return np.asarray(rows, dtype=float).reshape(len(links), len(av_positions))


def _hungarian_square(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Min-cost perfect matching on a square matrix (potentials method).

    Returns (row_of_col, total): row_of_col[j] is the row matched to column j.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: 1-based row matched to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, math.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = math.inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_of_col = p[1:] - 1
    total = float(sum(cost[row_of_col[j], j] for j in range(n)))
    return row_of_col, total


def _optimal_total(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    return _hungarian_square(cost)[1]


def assign(cost: np.ndarray) -> dict[int, int]:
    """Min-total-cost injective matching on the smaller side of a cost matrix.

    Returns {row: column}. Rectangular inputs are padded to square with a
    constant (every perfect matching uses the same number of padded cells, so
    the padding value cannot change which real matching is optimal); padded
    pairs are dropped from the result. Among cost ties the lexicographically
    smallest (row, column) sequence is returned.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise AssignmentError("cost matrix must be 2-D")
    if cost.size == 0:
        return {}
    if not np.isfinite(cost).all():
        raise AssignmentError("cost matrix entries must be finite")
    r, c = cost.shape
    n = max(r, c)
    padded = np.zeros((n, n))
    padded[:r, :c] = cost

    row_of_col, total = _hungarian_square(padded)
    tol = 1e-9 * max(1.0, abs(total))

    if n > _LEX_REFINE_LIMIT:
        return {
            int(row_of_col[j]): j
            for j in range(n)
            if row_of_col[j] < r and j < c
        }

    # Fix rows in order to the smallest column that preserves optimality.
    fixed: dict[int, int] = {}
    free_cols = list(range(n))
    rows_left = list(range(n))
    fixed_cost = 0.0
    for i in range(n):
        rows_left.remove(i)
        # real columns in ascending order first, padded columns last
        candidates = sorted(j for j in free_cols if j < c) + sorted(
            j for j in free_cols if j >= c
        )
        for j in candidates:
            rest_cols = [jj for jj in free_cols if jj != j]
            rest = padded[np.ix_(rows_left, rest_cols)]
            cand_total = fixed_cost + padded[i, j] + _optimal_total(rest)
            if cand_total <= total + tol:
                fixed[i] = j
                fixed_cost += padded[i, j]
                free_cols.remove(j)
                break
        else:  # pragma: no cover - optimal completion always exists
            raise AssignmentError("internal: no column preserves the optimum")

    return {i: j for i, j in fixed.items() if i < r and j < c}


def assignment_cost(cost: np.ndarray, matching: dict[int, int]) -> float:
    return float(sum(cost[i, j] for i, j in matching.items()))
