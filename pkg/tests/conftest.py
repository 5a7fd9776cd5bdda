"""Shared fixtures: the bundled feeder, synthetic grids, and the expensive
session-scoped campaign runs that several test modules assert against."""

import json
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from toposig import (
    DetectorConfig,
    PmuSet,
    ScenarioConfig,
    bundled_feeder_path,
    load_feeder,
    run_campaign,
)
from toposig.placement import greedy_placement

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# Campaign knobs shared by the reproduction tests. tau=2 keeps the detection
# delay inside the error budget at quiet load; the default tau=5 trades that
# margin for extra confirmation and lands above the 2% row target.
CAMPAIGN_TAU = 2
CAMPAIGN_SEED = 12345
CAMPAIGN_RUNS = 2000
SD_ROWS = (0.0, 0.184, 0.425, 0.604)

# 6-bus observable seed for the greedy placement: one PMU per feeder region,
# near (not on) tie-switch endpoints, spread over the trunk and all laterals.
GREEDY_SEED_BUSES = (3, 7, 13, 20, 23, 29)
GREEDY_NUM_RUN = 200
GREEDY_TSTOP = 200


@pytest.fixture(scope="session")
def grid():
    return load_feeder(bundled_feeder_path())


@pytest.fixture(scope="session")
def all_pmus(grid):
    return PmuSet.all_buses(grid.n_buses)


def campaign_rows(grid, pmus, runs=CAMPAIGN_RUNS, seed=CAMPAIGN_SEED):
    """One CampaignReport per load-SD row, all with the same master seed."""
    det = DetectorConfig(tau=CAMPAIGN_TAU)
    rows = []
    for sd in SD_ROWS:
        base = ScenarioConfig(
            grid=grid,
            pmus=pmus,
            initial_state=grid.initial_state(),
            sd_kw=sd,
            detector=det,
        )
        rows.append(run_campaign(base, runs, seed=seed, keep_records=False))
    return rows


# wall-clock cost of each expensive fixture, for the runtime-budget checks
FIXTURE_SECONDS: dict[str, float] = {}


@pytest.fixture(scope="session")
def ref33_rows(grid, all_pmus):
    """2000-run campaigns, full PMU coverage, one row per load SD."""
    t0 = time.perf_counter()
    rows = campaign_rows(grid, all_pmus)
    FIXTURE_SECONDS["ref33_rows"] = time.perf_counter() - t0
    return rows


@pytest.fixture(scope="session")
def greedy_outcome(grid):
    """Greedy growth of the 6-PMU seed by one bus, with its round table."""
    base = ScenarioConfig(
        grid=grid,
        pmus=PmuSet(GREEDY_SEED_BUSES),
        initial_state=grid.initial_state(),
        sd_kw=0.184,
        detector=DetectorConfig(tau=CAMPAIGN_TAU),
    )
    t0 = time.perf_counter()
    result = greedy_placement(
        grid, PmuSet(GREEDY_SEED_BUSES), GREEDY_NUM_RUN, GREEDY_TSTOP, base,
        campaign_seed=0,
    )
    FIXTURE_SECONDS["greedy_outcome"] = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def seven_rows(grid, greedy_outcome):
    """2000-run campaigns on the greedy-placed 7-PMU set."""
    final, _rounds = greedy_outcome
    t0 = time.perf_counter()
    rows = campaign_rows(grid, final)
    FIXTURE_SECONDS["seven_rows"] = time.perf_counter() - t0
    return rows


def write_feeder(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def uniform_grid_doc(n=10, r=0.4, x=0.3, p_kw=80.0, q_kvar=40.0):
    """Line feeder with uniform per-branch impedance and two uniform ties.

    Every branch shares the same X/R ratio, so the admittance matrix splits
    as (1 + i alpha) times a real Laplacian.
    """
    buses = [{"id": 0}] + [
        {"id": i, "p_kw": p_kw, "q_kvar": q_kvar} for i in range(1, n)
    ]
    branches = [
        {"from": i, "to": i + 1, "r_ohm": r, "x_ohm": x} for i in range(n - 1)
    ]
    branches.append(
        {
            "from": 2,
            "to": n - 1,
            "r_ohm": r,
            "x_ohm": x,
            "switch": {"id": 0, "name": "T1", "initial_closed": False},
        }
    )
    branches.append(
        {
            "from": 1,
            "to": n - 3,
            "r_ohm": r,
            "x_ohm": x,
            "switch": {"id": 1, "name": "T2", "initial_closed": False},
        }
    )
    return {"nominal_voltage_v": 12660.0, "buses": buses, "branches": branches}


def bridge_grid_doc():
    """Four-bus line whose middle branch carries a switch: opening it
    disconnects the tail, so that flip must be rejected everywhere."""
    return {
        "nominal_voltage_v": 12660.0,
        "buses": [
            {"id": 0},
            {"id": 1, "p_kw": 50.0, "q_kvar": 20.0},
            {"id": 2, "p_kw": 50.0, "q_kvar": 20.0},
            {"id": 3, "p_kw": 50.0, "q_kvar": 20.0},
        ],
        "branches": [
            {"from": 0, "to": 1, "r_ohm": 0.3, "x_ohm": 0.2},
            {
                "from": 1,
                "to": 2,
                "r_ohm": 0.3,
                "x_ohm": 0.2,
                "switch": {"id": 0, "name": "B1", "initial_closed": True},
            },
            {"from": 2, "to": 3, "r_ohm": 0.3, "x_ohm": 0.2},
        ],
    }


@pytest.fixture()
def uniform_grid(tmp_path):
    return load_feeder(write_feeder(tmp_path / "uniform.json", uniform_grid_doc()))


@pytest.fixture()
def bridge_grid(tmp_path):
    return load_feeder(write_feeder(tmp_path / "bridge.json", bridge_grid_doc()))


def rel_inf(A, B):
    denom = max(float(np.max(np.abs(B))), 1e-300)
    return float(np.max(np.abs(A - B))) / denom
