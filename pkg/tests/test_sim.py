"""Tests for fleetrl.sim: agents, policies, the tick loop, metrics and comparisons."""

import json
import math

import pandas as pd
import pytest

from fleetrl.config import GameConfig, GridConfig, Policy, SimConfig, StopRule, SweepConfig
from fleetrl.consensus.graph import CommGraph
from fleetrl.demand.estimate import DemandModel
from fleetrl.demand.geometry import GridGeometry
from fleetrl.demand.trips import RecordedTripStream, TripRecord
from fleetrl.exceptions import ConfigError, ShapeMismatchError, SweepMismatchError
from fleetrl.game.tasks import Task
from fleetrl.learning.adaptive import SarsaUpdateEvent
from fleetrl.mdp.qtable import ActionIndex, QTable
from fleetrl.sim import (
    AgentStatus,
    CentralizedSarsaPolicy,
    DemandSetup,
    DistributedSarsaPolicy,
    FleetSimulator,
    GreedyPolicy,
    MdpStaticPolicy,
    RunMetrics,
    ShortestPathPolicy,
    SimAgent,
    compare_runs,
    config_digest,
    get_policy,
    plan_route,
    run_dir_name,
    run_sweep,
)


def line_setup(trips):
    """Three 1 km cells in a row with an empty model and recorded trips."""
    geometry = GridGeometry.from_config(GridConfig(rows=1, cols=3, cell_km=1.0))
    return DemandSetup(DemandModel.zeros(3), RecordedTripStream(trips), geometry)


def greedy_config(**overrides):
    settings = dict(
        n_agents=1,
        horizon=20,
        seed=0,
        policy="greedy",
        game=GameConfig(r_c=1.0, comm_radius=2.0),
        stop=StopRule(window=50),
        speed=1.0,
    )
    settings.update(overrides)
    return SimConfig(**settings)


def stub_runner(fares):
    """Runner that earns ``fares[policy] * (seed + 1)`` without simulating."""

    def _run(cfg):
        metrics = RunMetrics(run_dir_name(cfg), cfg.policy.value, cfg.seed, cfg.n_agents, cfg.horizon)
        metrics.revenue = [fares[cfg.policy.value] * (cfg.seed + 1)]
        metrics.ticks = 1
        return metrics

    return _run


class TestRoutes:
    """Timed stops of single and pooled jobs."""

    def test_single_ride(self):
        t = Task(1, (3.0, 4.0), (3.0, 8.0), 0, 1, 5.0, duration=2.5)
        stops = plan_route((0.0, 0.0), [t], start=10.0, speed=1.0)
        assert [s.kind for s in stops] == ["pickup", "dropoff"]
        assert stops[0].time == pytest.approx(15.0)
        assert stops[1].time == pytest.approx(17.5)

    def test_pooled_order_and_times(self):
        a = Task(1, (1.0, 0.0), (5.0, 0.0), 0, 5, 1.0)
        b = Task(2, (2.0, 0.0), (4.0, 0.0), 0, 4, 1.0)
        stops = plan_route((0.0, 0.0), [a, b], start=0.0, speed=2.0)
        assert [(s.kind, s.task.id) for s in stops] == [
            ("pickup", 1),
            ("pickup", 2),
            ("dropoff", 2),
            ("dropoff", 1),
        ]
        assert [s.time for s in stops] == pytest.approx([0.5, 1.0, 2.0, 2.5])

    def test_bad_jobs(self):
        t = Task(1, (1.0, 0.0), (2.0, 0.0), 0, 1, 1.0)
        with pytest.raises(ValueError):
            plan_route((0.0, 0.0), [t], 0.0, speed=0.0)
        with pytest.raises(ValueError):
            plan_route((0.0, 0.0), [], 0.0, speed=1.0)
        with pytest.raises(ValueError):
            plan_route((0.0, 0.0), [t, t, t], 0.0, speed=1.0)


class TestSimAgent:
    """Movement along a route."""

    def test_single_job_lifecycle(self):
        agent = SimAgent(0, (0.0, 0.0))
        t = Task(1, (2.0, 0.0), (2.0, 3.0), 0, 1, 5.0, duration=3.0)
        agent.assign([t], tick=0, speed=1.0)
        assert agent.busy_until == 5

        assert agent.advance(1) == []
        assert agent.status == AgentStatus.TO_PICKUP
        assert agent.position == pytest.approx((1.0, 0.0))

        agent.advance(2)
        assert agent.status == AgentStatus.CARRYING
        agent.advance(3)
        assert agent.position == pytest.approx((2.0, 1.0))

        (delivery,) = agent.advance(5)
        assert delivery.task.id == 1
        assert delivery.final
        assert (delivery.tick, delivery.assigned_tick) == (5, 0)
        assert agent.idle
        assert agent.position == pytest.approx((2.0, 3.0))

    def test_busy_agent_rejects_jobs(self):
        agent = SimAgent(0, (0.0, 0.0))
        t = Task(1, (2.0, 0.0), (2.0, 3.0), 0, 1, 5.0)
        agent.assign([t], tick=0, speed=1.0)
        with pytest.raises(RuntimeError):
            agent.assign([t], tick=1, speed=1.0)

    def test_pooled_deliveries_chain(self):
        agent = SimAgent(0, (0.0, 0.0))
        a = Task(1, (1.0, 0.0), (5.0, 0.0), 0, 5, 1.0)
        b = Task(2, (2.0, 0.0), (4.0, 0.0), 0, 4, 1.0)
        agent.assign([a, b], tick=0, speed=1.0)
        first, second = agent.advance(5)
        assert first.task.id == 2 and first.next_dropoff_cell == 5
        assert second.task.id == 1 and second.final
        assert first.pooled and second.pooled


class TestPolicies:
    """Policy registry and learning hooks."""

    @pytest.fixture
    def warm(self):
        return QTable.filled(ActionIndex.dense(2), 0.0, gamma=0.8)

    @pytest.mark.parametrize(
        "policy, cls",
        [
            (Policy.DISTRIBUTED_SARSA, DistributedSarsaPolicy),
            (Policy.CENTRALIZED_SARSA, CentralizedSarsaPolicy),
            (Policy.MDP_STATIC, MdpStaticPolicy),
            (Policy.GREEDY, GreedyPolicy),
            ("shortest-path", ShortestPathPolicy),
        ],
    )
    def test_registry(self, warm, policy, cls):
        assert isinstance(get_policy(policy, warm, n_agents=2), cls)

    def test_unknown_policy(self, warm):
        with pytest.raises(NotImplementedError, match="Supported policies"):
            get_policy("teleport", warm, n_agents=1)

    def test_static_policies_do_not_learn(self, warm):
        policy = get_policy(Policy.MDP_STATIC, warm, n_agents=2)
        assert not policy.learns
        assert policy.q_for(1) is warm
        assert policy.learn([None, None], CommGraph.identity(2)) == []

    def test_centralized_records_observing_agents(self, warm):
        policy = get_policy(Policy.CENTRALIZED_SARSA, warm, n_agents=2)
        ev = SarsaUpdateEvent(0, 1, 1, None, 2.0)
        (record,) = policy.learn([None, ev], CommGraph.identity(2))
        assert record.agent == 1
        assert record.pair == warm.index.pair(0, 1)
        assert record.r == pytest.approx(2.0)
        assert record.injected == pytest.approx(record.alpha * 2.0)

    def test_distributed_tracks_every_agent(self, warm):
        policy = get_policy(Policy.DISTRIBUTED_SARSA, warm, n_agents=3)
        assert [agent for agent, _ in policy.tracked_values(0)] == [0, 1, 2]
        assert policy.disagreement() == 0.0


class TestFleetSimulator:
    """End-to-end runs of the tick loop."""

    def test_one_agent_one_trip(self):
        trip = TripRecord(0, 2, 0, 2.0, 10.0, pickup_point=(0.5, 0.5), dropoff_point=(2.5, 0.5))
        sim = FleetSimulator(greedy_config(), demand=line_setup([trip]), positions=[(0.5, 0.5)])
        metrics = sim.run()
        assert metrics.total_revenue == 10.0
        assert len(metrics.trips) == 1
        assert metrics.trips[0]["wait"] == 0
        assert metrics.trips[0]["ride_ticks"] == 2
        assert metrics.ended_early
        assert metrics.ticks == 3

    def test_successor_action_is_next_dropoff_cell(self):
        first = TripRecord(0, 1, 0, 1.0, 10.0, pickup_point=(0.5, 0.5), dropoff_point=(1.5, 0.5))
        second = TripRecord(2, 0, 1, 1.0, 10.0, pickup_point=(2.2, 0.5), dropoff_point=(0.5, 0.5))
        warm = QTable.filled(ActionIndex.dense(3), 5.0, gamma=0.8)
        sim = FleetSimulator(
            greedy_config(policy="centralized-sarsa"),
            demand=line_setup([first, second]),
            warm_start=warm,
            positions=[(0.5, 0.5)],
        )
        events = []
        learn = sim.policy.learn

        def record(batch, graph):
            events.extend(ev for ev in batch if ev is not None)
            return learn(batch, graph)

        sim.policy.learn = record
        metrics = sim.run()
        assert len(metrics.trips) == 2
        handover, last = events
        assert (handover.state, handover.action, handover.successor) == (0, 1, 1)
        assert handover.successor_action == 0
        assert (last.state, last.action, last.successor) == (2, 0, 0)
        assert last.successor_action is None

    def test_out_of_range_request_expires(self):
        trip = TripRecord(0, 2, 0, 1.0, 10.0, pickup_point=(2.5, 0.5), dropoff_point=(0.5, 0.5))
        sim = FleetSimulator(greedy_config(), demand=line_setup([trip]), positions=[(0.5, 0.5)])
        metrics = sim.run()
        assert metrics.total_revenue == 0.0
        assert metrics.requests == 1
        assert metrics.expired == 1
        assert metrics.ticks == 6

    def test_no_agents_no_revenue(self, small_sim_config):
        metrics = FleetSimulator(small_sim_config.with_overrides({"n_agents": 0, "tracked_pairs": []})).run()
        assert metrics.total_revenue == 0.0
        assert metrics.trips == []
        assert metrics.ticks == small_sim_config.horizon

    def test_same_seed_same_run(self, small_sim_config):
        a = FleetSimulator(small_sim_config).run()
        b = FleetSimulator(small_sim_config).run()
        assert a.summary() == b.summary()
        for stem, frame in a.frames().items():
            pd.testing.assert_frame_equal(frame, b.frames()[stem])

    def test_tracked_pairs_are_snapshotted(self, small_sim_config):
        metrics = FleetSimulator(small_sim_config).run()
        ticks = sorted({row["tick"] for row in metrics.q_trace})
        assert ticks == list(range(0, metrics.ticks, 5))
        assert {row["agent"] for row in metrics.q_trace} == {0, 1, 2}
        assert len(metrics.revenue) == metrics.ticks
        assert metrics.revenue == sorted(metrics.revenue)

    def test_recorded_graphs(self, small_sim_config):
        cfg = small_sim_config.with_overrides({"record_graphs": True, "horizon": 4})
        metrics = FleetSimulator(cfg).run()
        assert len(metrics.graphs) == 4
        assert all(g.is_doubly_stochastic() for g in metrics.graphs)
        assert "graphs" in metrics.frames()

    def test_unknown_tracked_pair(self):
        with pytest.raises(ConfigError):
            FleetSimulator(greedy_config(tracked_pairs=[(0, 7)]), demand=line_setup([]), positions=[(0.5, 0.5)])

    def test_position_count_checked(self):
        with pytest.raises(ShapeMismatchError):
            FleetSimulator(greedy_config(), demand=line_setup([]), positions=[])

    def test_warm_start_size_checked(self):
        warm = QTable.filled(ActionIndex.dense(2), 0.0, gamma=0.8)
        with pytest.raises(ShapeMismatchError):
            FleetSimulator(greedy_config(), demand=line_setup([]), warm_start=warm, positions=[(0.5, 0.5)])


class TestRunMetrics:
    """Summaries, windows and export."""

    def test_revenue_between(self):
        m = RunMetrics("run-x-s0", "greedy", 0, 1, 4, revenue=[0.0, 5.0, 5.0, 12.0])
        assert m.revenue_between(1, 3) == 5.0
        assert m.revenue_between(0, 4) == 12.0
        assert m.revenue_between(2, 99) == 7.0
        assert m.revenue_between(2, 2) == 0.0

    def test_empty_run(self):
        m = RunMetrics("run-x-s0", "greedy", 0, 0, 1)
        assert m.total_revenue == 0.0
        assert m.per_trip_mean == 0.0
        assert m.summary()["final_disagreement"] == 0.0

    def test_export(self, small_sim_config, tmp_path):
        metrics = FleetSimulator(small_sim_config).run()
        out = metrics.export(tmp_path / "run")
        for stem in ("revenue", "trips", "q_trace", "disagreement", "telemetry", "potential"):
            assert (out / f"{stem}.csv").exists()
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["total_revenue"] == pytest.approx(metrics.total_revenue)
        assert len(pd.read_csv(out / "revenue.csv")) == metrics.ticks

    def test_run_names_ignore_seed_in_digest(self):
        a, b = SimConfig(seed=1), SimConfig(seed=2)
        assert config_digest(a) == config_digest(b)
        assert run_dir_name(a) != run_dir_name(b)
        assert config_digest(a) != config_digest(SimConfig(seed=1, horizon=5))


class TestCompare:
    """Matched-seed revenue ratios."""

    FARES = {"greedy": 2.0, "centralized-sarsa": 1.0, "mdp-static": 0.0}

    def test_identical_configs_have_unit_ratio(self):
        cfgs = [SimConfig(policy="greedy", seed=s) for s in (0, 1)]
        result = compare_runs(cfgs, runner=stub_runner(self.FARES), max_workers=1)
        assert result.ratio("greedy") == 1.0
        assert len(result.runs) == 2

    def test_ratio_of_sums(self):
        cfgs = [SimConfig(policy=p, seed=s) for p in ("greedy", "centralized-sarsa") for s in (0, 1)]
        result = compare_runs(cfgs, baseline="centralized-sarsa", runner=stub_runner(self.FARES), max_workers=2)
        assert result.ratio(Policy.GREEDY) == pytest.approx(2.0)
        assert result.ratio("centralized-sarsa") == 1.0
        with pytest.raises(KeyError):
            result.ratio("greedy", point="nowhere")

    def test_zero_baseline_revenue_is_nan(self):
        cfgs = [SimConfig(policy=p) for p in ("greedy", "mdp-static")]
        result = compare_runs(cfgs, baseline="mdp-static", runner=stub_runner(self.FARES), max_workers=1)
        assert math.isnan(result.ratio("greedy"))

    def test_undeclared_difference(self):
        cfgs = [SimConfig(horizon=10), SimConfig(horizon=20)]
        with pytest.raises(SweepMismatchError, match="horizon"):
            compare_runs(cfgs, runner=stub_runner(self.FARES))

    def test_declared_dimension(self):
        cfgs = [SimConfig(policy="greedy", horizon=h) for h in (10, 20)]
        result = compare_runs(cfgs, dimensions=["horizon"], runner=stub_runner(self.FARES), max_workers=1)
        assert sorted(result.ratios["point"]) == ["horizon=10", "horizon=20"]

    def test_missing_baseline(self):
        with pytest.raises(ValueError, match="Baseline"):
            compare_runs([SimConfig(policy="greedy")], baseline="centralized-sarsa", runner=stub_runner(self.FARES))
        with pytest.raises(ValueError):
            compare_runs([])

    def test_run_sweep(self, tmp_path):
        sweep = SweepConfig(
            base=SimConfig(n_agents=1, horizon=5),
            dimensions={"game.comm_radius": [2.0, 30.0]},
            policies=["greedy", "centralized-sarsa"],
            seeds=[0, 1],
            baseline="centralized-sarsa",
        )
        result = run_sweep(sweep, runner=stub_runner(self.FARES), max_workers=1, out_dir=tmp_path)
        assert len(result.runs) == 8
        assert len(result.ratios) == 4
        assert result.ratio("greedy", "game.comm_radius=2.0") == pytest.approx(2.0)
        assert len(list(tmp_path.glob("run-*"))) == 8
        exported = result.export(tmp_path / "cmp")
        assert (exported / "comparison.csv").exists()
