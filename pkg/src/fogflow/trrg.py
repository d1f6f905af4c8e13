"""Time-layered resource graph over the frame sequence.

Vertices are per-frame vehicle copies plus a virtual source (alpha, where
sensed content enters) and sink (omega, where computed results leave). Arcs:

  perception     alpha -> source-vehicle copy, one per task per frame
  communication  transmitter copy -> receiver copy inside one frame
  carry          relay copy at frame k -> same relay at frame k+1 (cache)
  computing      fog copy -> omega (per frame)

Perceptual vehicles only transmit, fog vehicles only receive, relays do both
(but never both within one frame; the scheduler enforces that).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .scenario import Frame, Scenario

ALPHA_LABEL = "alpha"
OMEGA_LABEL = "omega"

ARC_KINDS = ("perception", "communication", "carry", "computing")


@dataclass(frozen=True, order=True)
class Vertex:
    kind: str  # "vehicle" | "alpha" | "omega"
    vid: str = ""
    frame: int = 0

    def label(self) -> str:
        if self.kind == "alpha":
            return ALPHA_LABEL
        if self.kind == "omega":
            return OMEGA_LABEL
        return f"v{self.frame}:{self.vid}"


ALPHA = Vertex("alpha")
OMEGA = Vertex("omega")


def vehicle_vertex(vid: str, frame: int) -> Vertex:
    return Vertex("vehicle", vid, frame)


@dataclass(frozen=True, order=True)
class Arc:
    kind: str
    tail: Vertex
    head: Vertex
    frame: int  # acting frame (carry: tail frame)
    task: str = ""  # perception arcs are per-task, others shared
    capacity_bits: float | None = None  # None: set after power allocation

    def label(self) -> str:
        suffix = f"#{self.task}" if self.task else ""
        return f"{self.kind}:{self.tail.label()}>{self.head.label()}{suffix}"


class TrrgError(ValueError):
    """Inconsistent graph construction input."""


@dataclass
class Trrg:
    frames: list[Frame]
    roles: dict[str, str]  # vid -> role
    arcs: list[Arc]

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def arcs_of_kind(self, kind: str) -> list[Arc]:
        return [a for a in self.arcs if a.kind == kind]

    def comm_arcs_in_frame(self, frame: int) -> list[Arc]:
        return [a for a in self.arcs if a.kind == "communication" and a.frame == frame]

    def vertices(self) -> set[Vertex]:
        verts = {ALPHA, OMEGA}
        for arc in self.arcs:
            verts.add(arc.tail)
            verts.add(arc.head)
        return verts


def build_trrg(scenario: Scenario, frames: list[Frame]) -> Trrg:
    """Construct all four arc families from the frame-wise contact geometry."""
    if not frames:
        raise TrrgError("no frames to build over")
    roles = {v.vid: v.role for v in scenario.vehicles.values()}
    transmitters = [vid for vid, r in roles.items() if r in ("perceptual", "relay")]
    receivers = [vid for vid, r in roles.items() if r in ("relay", "fog")]
    arcs: list[Arc] = []

    for task in scenario.tasks:
        last = min(task.delay_budget_frames, len(frames))
        for frame in frames[:last]:
            arcs.append(
                Arc(
                    "perception",
                    ALPHA,
                    vehicle_vertex(task.source, frame.index),
                    frame.index,
                    task=task.tid,
                    capacity_bits=math.inf,
                )
            )

    for frame in frames:
        t_mid = frame.midpoint
        positions = {
            vid: scenario.position_at(vid, t_mid) for vid in scenario.vehicles
        }
        for tx in transmitters:
            for rx in receivers:
                if tx == rx:
                    continue
                (ax, ay), (bx, by) = positions[tx], positions[rx]
                if math.hypot(bx - ax, by - ay) <= scenario.comm_range_m:
                    arcs.append(
                        Arc(
                            "communication",
                            vehicle_vertex(tx, frame.index),
                            vehicle_vertex(rx, frame.index),
                            frame.index,
                        )
                    )

    for vid, role in roles.items():
        if role == "relay":
            cache = scenario.vehicles[vid].cache_bits
            for frame in frames[:-1]:
                arcs.append(
                    Arc(
                        "carry",
                        vehicle_vertex(vid, frame.index),
                        vehicle_vertex(vid, frame.index + 1),
                        frame.index,
                        capacity_bits=cache,
                    )
                )
        elif role == "fog":
            compute = scenario.vehicles[vid].compute_bits
            for frame in frames:
                arcs.append(
                    Arc(
                        "computing",
                        vehicle_vertex(vid, frame.index),
                        OMEGA,
                        frame.index,
                        capacity_bits=compute,
                    )
                )

    return Trrg(frames=frames, roles=roles, arcs=arcs)


def reachable_paths_exist(
    trrg: Trrg,
    task_id: str,
    delay_budget_frames: int,
    usable_comm=None,
) -> bool:
    """True iff a directed alpha->omega path exists within the delay budget.

    Communication and carry arcs are usable only in frames k < delay budget;
    usable_comm optionally restricts communication arcs (e.g. to the scheduled
    ones, or those with positive capacity).
    """
    t_s = delay_budget_frames
    adj: dict[Vertex, list[Vertex]] = {}

    def add(arc: Arc):
        adj.setdefault(arc.tail, []).append(arc.head)

    for arc in trrg.arcs:
        if arc.kind == "perception":
            if arc.task == task_id:
                add(arc)
        elif arc.kind == "communication":
            if arc.frame < t_s and (usable_comm is None or arc in usable_comm):
                add(arc)
        elif arc.kind == "carry":
            if arc.frame < t_s:
                add(arc)
        else:  # computing
            add(arc)

    seen = {ALPHA}
    queue = deque([ALPHA])
    while queue:
        v = queue.popleft()
        if v == OMEGA:
            return True
        for w in adj.get(v, ()):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return False


def dump_graph(trrg: Trrg, capacities: dict[Arc, float] | None = None) -> str:
    """Plain-text edge list: kind, tail, head, frame, capacity (tab-separated)."""
    lines = []
    for arc in sorted(trrg.arcs):
        if capacities is not None and arc in capacities:
            cap = capacities[arc]
        else:
            cap = arc.capacity_bits
        cap_s = "unset" if cap is None else format(cap, ".10g")
        task_s = arc.task if arc.task else "-"
        lines.append(
            f"{arc.kind}\t{arc.tail.label()}\t{arc.head.label()}\t{arc.frame}\t{task_s}\t{cap_s}"
        )
    return "\n".join(lines) + "\n"
