"""Acceptance-scale checks on seeded synthetic runs.

Deselected by default; run with ``pytest -m slow``.
"""

import networkx as nx
import numpy as np
import pytest

from fleetrl.config import GameConfig, GridConfig, SimConfig, SweepConfig
from fleetrl.consensus.tracking import error_bounds
from fleetrl.demand.estimate import DemandModel
from fleetrl.demand.geometry import GridGeometry
from fleetrl.game import Task, UtilityMode, UtilityModel, build_game, potential_identity_check
from fleetrl.mdp.model import build_mdp
from fleetrl.mdp.qtable import ActionIndex, QTable
from fleetrl.mdp.solver import solve_mpi, solve_value_iteration
from fleetrl.sim import FleetSimulator, run_sweep

pytestmark = pytest.mark.slow


def random_model(n_q, rng):
    L = rng.random((n_q, n_q)) * 0.6 / n_q
    D = rng.random((n_q, n_q)) * 20.0
    M = 0.5 + rng.random((n_q, n_q))
    return DemandModel(n_q, L, D, M)


def test_mpi_matches_value_iteration_on_random_models():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        mdp = build_mdp(random_model(int(rng.integers(2, 5)), rng), gamma=0.8)
        assert np.allclose(mdp.P.sum(axis=1), 1.0, atol=1e-12)
        q_mpi, _ = solve_mpi(mdp, tol=1e-10)
        q_vi = solve_value_iteration(mdp, tol=1e-10)
        assert np.allclose(q_mpi.values, q_vi.values, atol=1e-6)


@pytest.mark.parametrize("pooling", [False, True])
def test_potential_identity_fuzz(pooling):
    rng = np.random.default_rng(7 if pooling else 8)
    geometry = GridGeometry(3, 3, 1.0)
    cfg = GameConfig(r_c=1.5, comm_radius=3.0, C=2.0, C_prime=1.0, pooling=pooling)
    for _ in range(500):
        n_players = int(rng.integers(1, 6))
        tasks = []
        for k in range(int(rng.integers(0, 7))):
            pickup = tuple(rng.random(2) * 3.0)
            dropoff = tuple(rng.random(2) * 3.0)
            tasks.append(
                Task(k, pickup, dropoff, geometry.locate(pickup), geometry.locate(dropoff), 1.0 + k)
            )
        tables = [QTable(ActionIndex.dense(9), rng.normal(size=81), gamma=0.8) for _ in range(n_players)]
        utility = UtilityModel(
            UtilityMode.SARSA,
            cfg,
            rewards=rng.random((9, 9)) * 10.0,
            q_for=lambda aid: tables[aid],
            locate=geometry.locate,
        )
        positions = [tuple(rng.random(2) * 3.0) for _ in range(n_players)]
        game = build_game(positions, tasks, cfg, utility)
        profile = tuple(acts[int(rng.integers(len(acts)))] for acts in game.action_sets)
        player = int(rng.integers(n_players))
        acts = game.action_sets[player]
        a = acts[int(rng.integers(len(acts)))]
        b = acts[int(rng.integers(len(acts)))]
        assert potential_identity_check(game, profile, player, a, b)


@pytest.fixture
def city():
    return {
        "kind": "synthetic",
        "scenario": {
            "grid": GridConfig(rows=2, cols=2, cell_km=1.0),
            "base_rate": 0.05,
            "hot_cells": [3],
            "hot_factor": 2.0,
            "fare_noise": 0.1,
        },
    }


def test_single_agent_distributed_matches_centralized(city):
    base = SimConfig(
        n_agents=1,
        horizon=3000,
        seed=11,
        demand=city,
        game=GameConfig(r_c=1.5, comm_radius=3.0),
        speed=1.0,
        snapshot_every=1,
        tracked_pairs=[(0, 3), (3, 3)],
    )
    dist = FleetSimulator(base.with_overrides({"policy": "distributed-sarsa"}))
    cent = FleetSimulator(base.with_overrides({"policy": "centralized-sarsa"}))
    m_dist, m_cent = dist.run(), cent.run()

    assert [r["value"] for r in m_dist.q_trace] == [r["value"] for r in m_cent.q_trace]
    assert m_dist.revenue == m_cent.revenue
    assert np.array_equal(dist.policy.final_q().values, cent.policy.final_q().values)


def test_average_tracking_identity(city):
    cfg = SimConfig(
        n_agents=4,
        horizon=10_000,
        seed=5,
        demand=city,
        game=GameConfig(r_c=1.5, comm_radius=3.0),
        speed=1.0,
    )
    sim = FleetSimulator(cfg)
    warm = sim.policy.warm_start.values.copy()
    metrics = sim.run()

    injected = np.zeros_like(warm)
    for row in metrics.telemetry:
        injected[row["pair"]] += row["injected"]
    mean_q = sim.policy.fleet.q_hat.mean(axis=0)
    assert np.allclose(mean_q, warm + injected / cfg.n_agents, atol=1e-8, rtol=0.0)


def test_complete_graph_disagreement_within_bound(city):
    cfg = SimConfig(
        n_agents=5,
        horizon=2000,
        seed=3,
        demand=city,
        game=GameConfig(r_c=1.5, comm_radius=30.0),
        speed=1.0,
        record_graphs=True,
    )
    metrics = FleetSimulator(cfg).run()
    r_max = max((abs(row["injected"]) for row in metrics.telemetry), default=0.0)
    bounds = error_bounds(metrics.graphs[100:], r_max=r_max, dr_max=0.0)
    assert bounds.finite
    assert metrics.disagreement[-1] <= bounds.delta_q


def test_connected_fleet_disagreement_within_bound(city):
    cfg = SimConfig(
        n_agents=10,
        horizon=50_000,
        seed=4,
        demand=city,
        game=GameConfig(r_c=1.0, comm_radius=2.5),
        speed=1.0,
        snapshot_every=1000,
        record_graphs=True,
    )
    metrics = FleetSimulator(cfg).run()
    warmup = 1000
    graphs = metrics.graphs[warmup:]
    assert all(nx.is_strongly_connected(g.to_networkx()) for g in graphs)

    observed = [row for row in metrics.telemetry if row["tick"] >= warmup]
    r_max = max(abs(row["injected"]) for row in observed)
    dr_max = 2.0 * max(abs(cfg.n_agents * row["r"]) for row in observed)
    bounds = error_bounds(graphs, r_max=r_max, dr_max=dr_max)
    assert bounds.finite
    assert bounds.sigma > 0.0
    assert metrics.disagreement[-1] <= bounds.delta_q


@pytest.fixture
def drift_city():
    """3 x 3 city of 2 km cells whose corner cell 0 turns lucrative at tick 500."""
    return {
        "kind": "synthetic",
        "scenario": {
            "grid": GridConfig(rows=3, cols=3, cell_km=2.0),
            "base_rate": 0.02,
            "hot_cells": [0],
            "hot_factor": 2.0,
            "fare_base": 0.5,
            "fare_per_km": 2.0,
            "duration_base": 3.0,
            "trip_speed": 0.5,
            "drift": {
                "kind": "step",
                "start": 500,
                "cells": [0],
                "rate_factor": 3.0,
                "fare_factor": 4.0,
            },
        },
    }


def test_learning_fleet_outearns_greedy_and_shortest_path(drift_city):
    horizon = 3000
    base = SimConfig(
        n_agents=20,
        horizon=horizon,
        demand=drift_city,
        game=GameConfig(r_c=2.0, comm_radius=5.5),
    )
    ordered = 0
    for seed in range(5):
        revenue = {}
        for policy in ("distributed-sarsa", "greedy", "shortest-path"):
            metrics = FleetSimulator(base.with_overrides({"policy": policy, "seed": seed})).run()
            revenue[policy] = metrics.revenue_between(3 * horizon // 4, horizon)
        ordered += revenue["distributed-sarsa"] > revenue["greedy"] > revenue["shortest-path"]
    assert ordered >= 4


def test_revenue_ratio_grows_with_comm_radius(drift_city):
    radii = [2.0, 5.5, 30.0]
    sweep = SweepConfig(
        base=SimConfig(
            n_agents=20,
            horizon=4000,
            demand=drift_city,
            game=GameConfig(r_c=1.0, comm_radius=2.0),
        ),
        dimensions={"game.comm_radius": radii},
        policies=["distributed-sarsa", "centralized-sarsa"],
        seeds=[0, 1, 2, 3, 4],
        baseline="centralized-sarsa",
    )
    comparison = run_sweep(sweep)
    ratios = [comparison.ratio("distributed-sarsa", f"game.comm_radius={r}") for r in radii]
    assert ratios[-1] >= 0.95
    for smaller, larger in zip(ratios, ratios[1:]):
        assert larger >= smaller - 0.02
