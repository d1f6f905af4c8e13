"""Discrete-frame simulator and optimizer for cooperative content
dissemination over vehicular fog networks."""

from .flow import FlowError, FlowSolution, baseline_mask, build_program, dump_solution, solve
from .pipeline import PointResult, outage_eval, run_experiment, run_point
from .power import PairPower, arc_capacities, powers_csv, solve_pair
from .robust import (
    UncertaintySet,
    learn_uncertainty_set,
    load_samples,
    max_link_power,
    quantile_gain,
    save_samples,
)
from .scenario import (
    ChannelParams,
    Frame,
    Scenario,
    ScenarioError,
    Task,
    VehicleSpec,
    contact_frames,
    load_scenario,
)
from .scheduling import schedule_frame
from .subchannel import assign, interference_matrix
from .trrg import Arc, Trrg, Vertex, build_trrg

__version__ = "0.1.0"

__all__ = [
    "Arc",
    "ChannelParams",
    "FlowError",
    "FlowSolution",
    "Frame",
    "PairPower",
    "PointResult",
    "Scenario",
    "ScenarioError",
    "Task",
    "Trrg",
    "UncertaintySet",
    "VehicleSpec",
    "Vertex",
    "arc_capacities",
    "assign",
    "baseline_mask",
    "build_program",
    "build_trrg",
    "contact_frames",
    "dump_solution",
    "interference_matrix",
    "learn_uncertainty_set",
    "load_samples",
    "load_scenario",
    "max_link_power",
    "outage_eval",
    "powers_csv",
    "quantile_gain",
    "run_experiment",
    "run_point",
    "save_samples",
    "schedule_frame",
    "solve",
    "solve_pair",
    "__version__",
]
