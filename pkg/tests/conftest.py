"""Shared fixtures: the packaged reference scenario and cached pipeline runs."""

import pathlib

import pytest

from fogflow.pipeline import run_point
from fogflow.scenario import ChannelParams, Scenario, load_scenario

CONFIG = pathlib.Path(__file__).resolve().parents[1] / "configs" / "reference.ini"

POWER_VALUES = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0)
CACHE_VALUES = (0.0, 5e6, 1e7, 2e7, 4e7, 8e7)
COMPUTE_VALUES = (0.0, 1e7, 5e7, 1e8, 2e8, 4e8, 8e8)


def build_scenario(vehicles, tasks=(), avs=None, bs=(100.0, 25.0), seed=7,
                   channel=None, comm_range_m=100.0, horizon_s=10.0):
    """Scenario literal for unit tests; defaults mirror the packaged config."""
    return Scenario(
        vehicles={v.vid: v for v in vehicles},
        avs=dict(avs or {}),
        bs_xy=bs,
        channel=channel or ChannelParams(),
        tasks=tuple(tasks),
        seed=seed,
        comm_range_m=comm_range_m,
        horizon_s=horizon_s,
    )


@pytest.fixture(scope="session")
def reference():
    return load_scenario(str(CONFIG))


@pytest.fixture(scope="session")
def robust_point(reference):
    return run_point(reference, "robust", eval_draws=2000)


@pytest.fixture(scope="session")
def norobust_point(reference):
    return run_point(reference, "norobust", eval_draws=2000)


@pytest.fixture(scope="session")
def delay_sweep(reference):
    return {
        t_s: run_point(reference, "robust", "delay", float(t_s), eval_draws=0)
        for t_s in range(1, 7)
    }


@pytest.fixture(scope="session")
def power_sweep(reference):
    return {
        (app, v): run_point(reference, app, "max_power", v, eval_draws=0)
        for app in ("robust", "v2only", "v5only", "withoutcarry")
        for v in POWER_VALUES
    }


@pytest.fixture(scope="session")
def cache_sweep(reference):
    return {
        (app, v): run_point(reference, app, "cache", v, eval_draws=0)
        for app in ("robust", "withoutcarry")
        for v in CACHE_VALUES
    }


@pytest.fixture(scope="session")
def compute_sweep(reference):
    return {
        v: run_point(reference, "robust", "compute", v, eval_draws=0)
        for v in COMPUTE_VALUES
    }
