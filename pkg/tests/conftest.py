"""Shared pytest fixtures for fleetrl tests.

Provides small grids, demand models, trip files and simulation configs that
keep every test fast and deterministic.
"""

import json

import numpy as np
import pytest

from fleetrl.config import (
    GameConfig,
    GridConfig,
    LearningConfig,
    SimConfig,
    StopRule,
    SyntheticScenario,
)
from fleetrl.demand.estimate import DemandModel
from fleetrl.demand.geometry import GridGeometry


@pytest.fixture
def line_grid():
    """Three 1 km cells in a row: centroids at x = 0.5, 1.5, 2.5."""
    return GridConfig(rows=1, cols=3, cell_km=1.0)


@pytest.fixture
def line_geometry(line_grid):
    return GridGeometry.from_config(line_grid)


@pytest.fixture
def two_cell_model():
    """Two-cell demand model with a busy 0 -> 1 direction."""
    return DemandModel(
        n_q=2,
        L=np.array([[0.1, 0.4], [0.2, 0.3]]),
        D=np.array([[1.0, 5.0], [2.0, 0.5]]),
        M=np.ones((2, 2)),
    )


@pytest.fixture
def trip_csv(tmp_path):
    """Trip file in cell mode with one malformed row."""
    path = tmp_path / "trips.csv"
    path.write_text(
        "pickup_cell,dropoff_cell,start_time,duration,fare\n"
        "0,1,0,2.0,4.0\n"
        "1,2,1,1.0,3.0\n"
        "2,x,2,1.0,3.0\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def small_scenario():
    """2 x 2 synthetic city with a few requests per tick."""
    return SyntheticScenario(
        grid=GridConfig(rows=2, cols=2, cell_km=1.0),
        base_rate=0.05,
        hot_cells=[3],
        hot_factor=2.0,
        fare_noise=0.1,
    )


@pytest.fixture
def small_sim_config(small_scenario):
    """Short distributed-SARSA run on the 2 x 2 city."""
    return SimConfig(
        n_agents=3,
        horizon=30,
        seed=7,
        demand={"kind": "synthetic", "scenario": small_scenario},
        game=GameConfig(r_c=1.5, comm_radius=3.0),
        learning=LearningConfig(tol=1e-6),
        stop=StopRule(window=6, max_rounds=60),
        speed=1.0,
        snapshot_every=5,
        tracked_pairs=[(0, 3)],
    )


@pytest.fixture
def write_json(tmp_path):
    """Write a JSON payload under tmp_path and return its path."""

    def _write(name, payload):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write
