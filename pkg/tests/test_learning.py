"""Tests for fleetrl.learning: adaptive-rate SARSA and its distributed form."""

import math

import numpy as np
import pytest

from fleetrl.consensus.graph import CommGraph, build_graph
from fleetrl.exceptions import ShapeMismatchError
from fleetrl.learning.adaptive import (
    AdaptiveRateState,
    CentralizedLearner,
    GradientVarianceMonitor,
    SarsaUpdateEvent,
    alpha_error_bound,
    loss_gradient,
    optimal_rate,
    rate_from_moments,
    sarsa_step,
    update_rate,
)
from fleetrl.learning.distributed import (
    FleetLearnState,
    disagreement,
    fleet_learn_tick,
    local_correction,
)
from fleetrl.mdp.qtable import ActionIndex, QTable


def table(values, n_q=2, gamma=0.8):
    return QTable(ActionIndex.dense(n_q), np.asarray(values, dtype=float), gamma)


def random_events(n_q, count, seed, none_share=0.2):
    rng = np.random.default_rng(seed)
    events = []
    for _ in range(count):
        state, action = (int(x) for x in rng.integers(n_q, size=2))
        nxt = None if rng.random() < none_share else int(rng.integers(n_q))
        events.append(SarsaUpdateEvent(state, action, action, nxt, float(rng.normal(5.0, 2.0))))
    return events


class TestSarsaUpdateEvent:
    """Event consistency."""

    def test_successor_must_match_action(self):
        with pytest.raises(ValueError):
            SarsaUpdateEvent(0, 1, 0, None, 1.0)


class TestLossGradient:
    """Gradient of the squared temporal-difference loss."""

    def test_converged_pair(self):
        q = table([0, 5, 0, 0])
        assert loss_gradient(q, SarsaUpdateEvent(0, 1, 1, 0, 5.0), gamma=0.9) == 0.0

    def test_hand_arithmetic(self):
        q = table([0, 2, 0, 2])
        assert loss_gradient(q, SarsaUpdateEvent(0, 1, 1, 1, 1.0), gamma=0.5) == pytest.approx(0.0)

    def test_missing_successor_action_uses_best(self):
        q = table([0, 4, 1, 3])
        ev = SarsaUpdateEvent(0, 1, 1, None, 1.0)
        assert loss_gradient(q, ev, gamma=0.5) == pytest.approx(4 - 1 - 0.5 * 3)

    def test_matches_finite_difference(self):
        q = table([1.0, 2.5, -0.5, 3.0])
        ev = SarsaUpdateEvent(0, 1, 1, 0, 0.75)
        gamma = 0.8
        target = ev.reward + gamma * q.get(1, 0)

        def loss(value):
            return 0.5 * (value - target) ** 2

        h = 1e-5
        q_sa = q.get(0, 1)
        numeric = (loss(q_sa + h) - loss(q_sa - h)) / (2 * h)
        assert loss_gradient(q, ev, gamma) == pytest.approx(numeric, rel=1e-6)

    def test_unknown_pair(self):
        q = QTable(ActionIndex([[0], [1]]), [0.0, 0.0], 0.8)
        with pytest.raises(IndexError):
            loss_gradient(q, SarsaUpdateEvent(0, 1, 1, None, 1.0), 0.8)


class TestUpdateRate:
    """Moving-average learning rate."""

    def test_initial_rate_is_one(self):
        rs = AdaptiveRateState.initial(3)
        assert update_rate(rs, 0, 7.0, 0).alpha == 1.0

    def test_rho_zero_leaves_state(self):
        rs = AdaptiveRateState(np.array([0.5]), np.array([2.0]))
        update = update_rate(rs, 0, 100.0, 0)
        assert rs.f[0] == 0.5 and rs.g[0] == 2.0
        assert update.alpha == pytest.approx(0.125)

    def test_moving_average_formulas(self):
        rs = AdaptiveRateState.initial(1, zeta=0.2)
        update_rate(rs, 0, 3.0, 1)
        assert rs.f[0] == pytest.approx(1 + 0.2 * (3 - 1))
        assert rs.g[0] == pytest.approx(1 + 0.2 * (9 - 1))

    def test_constant_gradient_drives_rate_to_one(self):
        rs = AdaptiveRateState.initial(1, zeta=0.2)
        for _ in range(200):
            update = update_rate(rs, 0, 3.0, 1)
        assert rs.f[0] == pytest.approx(3.0)
        assert rs.g[0] == pytest.approx(9.0)
        assert update.alpha == pytest.approx(1.0)

    def test_underflow_forces_zero(self):
        assert rate_from_moments(0.0, 0.0, 1e-12) == (0.0, True)

    def test_rate_is_clamped(self):
        assert rate_from_moments(2.0, 1.0, 1e-12).alpha == 1.0

    def test_bad_rho(self):
        with pytest.raises(ValueError):
            update_rate(AdaptiveRateState.initial(1), 0, 1.0, 2)

    def test_rate_always_in_unit_interval(self):
        rs = AdaptiveRateState.initial(4)
        rng = np.random.default_rng(0)
        for grad in rng.standard_cauchy(2000):
            alpha = update_rate(rs, int(rng.integers(4)), float(grad), 1).alpha
            assert 0.0 <= alpha <= 1.0


class TestSarsaStep:
    """One adaptive SARSA update."""

    def test_full_replacement_at_rate_one(self):
        q = table([0, 3, 0, 0])
        record = sarsa_step(q, AdaptiveRateState.initial(4), SarsaUpdateEvent(0, 1, 1, 1, 2.0), 0.8)
        assert record.alpha == 1.0
        assert q.get(0, 1) == pytest.approx(2.0)

    def test_zero_rate_leaves_table(self):
        q = table([0, 3, 0, 0])
        rs = AdaptiveRateState(np.ones(4), np.ones(4), g_min=1e9)
        record = sarsa_step(q, rs, SarsaUpdateEvent(0, 1, 1, 1, 2.0), 0.8)
        assert record.underflow
        assert q.get(0, 1) == 3.0

    def test_touches_one_entry(self):
        q = table(np.arange(9.0), n_q=3)
        before = q.values.copy()
        record = sarsa_step(q, AdaptiveRateState.initial(9), SarsaUpdateEvent(2, 0, 0, 1, 5.0), 0.8)
        changed = np.flatnonzero(q.values != before)
        assert changed.tolist() == [record.pair]

    def test_converges_to_mean_target(self):
        rng = np.random.default_rng(42)
        q = table([0.0, 0.0, 0.0, 0.0])
        rs = AdaptiveRateState.initial(4)
        trace = []
        for _ in range(5000):
            reward = float(rng.normal(10.0, 1.0))
            sarsa_step(q, rs, SarsaUpdateEvent(0, 1, 1, 1, reward), 0.8)
            trace.append(q.get(0, 1))
        assert np.mean(trace[-2000:]) == pytest.approx(10.0, abs=0.2)

    def test_rate_rises_after_reward_shift(self):
        rng = np.random.default_rng(7)
        learner = CentralizedLearner(table([10.0, 10.0, 0.0, 0.0]), gamma=0.8)
        pair = learner.q.index.pair(0, 1)
        before = []
        for _ in range(500):
            learner.observe(SarsaUpdateEvent(0, 1, 1, 1, float(rng.normal(10.0, 1.0))))
            before.append(learner.alpha(pair))
        window = math.ceil(1 / 0.2)
        after = []
        for _ in range(window):
            learner.observe(SarsaUpdateEvent(0, 1, 1, 1, float(rng.normal(20.0, 1.0))))
            after.append(learner.alpha(pair))
        assert max(after) > before[-1]
        assert np.mean(after) > np.mean(before[-50:])


class TestCentralizedLearner:
    """Shared-table learner."""

    def test_warm_start_is_copied(self):
        warm = table([1.0, 1.0, 1.0, 1.0])
        learner = CentralizedLearner(warm, gamma=0.8)
        learner.observe(SarsaUpdateEvent(0, 0, 0, None, 5.0))
        assert warm.values.tolist() == [1.0, 1.0, 1.0, 1.0]
        assert learner.steps == 1
        assert learner.q.get(0, 0) != 1.0


class TestRateDiagnostics:
    """Closed-form rate helpers and the variance monitor."""

    def test_optimal_rate(self):
        assert optimal_rate(1.0, 1.0) == pytest.approx(0.5)
        assert optimal_rate(0.0, 0.0) == 0.0

    def test_alpha_error_bound(self):
        assert alpha_error_bound(0.1, 0.1, 1.0, 2.0) == pytest.approx((0.01 + 0.2) / (2.0 * 1.9))
        assert alpha_error_bound(0.1, 2.0, 1.0, 2.0) == float("inf")

    def test_variance_monitor(self):
        monitor = GradientVarianceMonitor(window=3)
        for grad in [1.0, 1.0, 1.0, 0.0, 2.0, 4.0]:
            monitor.observe(5, grad)
        assert monitor.drift(5) == pytest.approx(np.var([0.0, 2.0, 4.0]))
        assert monitor.drift(6) is None
        report = monitor.report()
        assert report["pair"].tolist() == [5]
        assert report["samples"].tolist() == [6]


class TestFleetLearnState:
    """Stacked per-agent state."""

    def test_initial_replicates_warm_start(self):
        fleet = FleetLearnState.initial(table([1, 2, 3, 4]), n_agents=3)
        assert fleet.q_hat.shape == (3, 4)
        assert np.all(fleet.q_hat == [1, 2, 3, 4])
        assert not fleet.omega.any()
        assert np.all(fleet.f_hat == 1) and np.all(fleet.g_hat == 1)

    def test_agent_views_share_memory(self):
        fleet = FleetLearnState.initial(table([1, 2, 3, 4]), n_agents=2)
        fleet.agents[1].q_hat.values[0] = 9.0
        fleet.agents[1].f_hat[2] = 0.5
        assert fleet.q_hat[1, 0] == 9.0
        assert fleet.f_hat[1, 2] == 0.5

    def test_shape_checked(self):
        with pytest.raises(ShapeMismatchError):
            FleetLearnState(
                ActionIndex.dense(2), 0.8, *(np.zeros((2, 4)) for _ in range(5)), np.zeros((2, 3))
            )


class TestFleetLearnTick:
    """Distributed learning rounds."""

    def test_single_agent_matches_centralized_exactly(self):
        warm = table(np.random.default_rng(1).normal(size=9), n_q=3)
        central = CentralizedLearner(warm, gamma=0.8)
        fleet = FleetLearnState.initial(warm, n_agents=1)
        graph = CommGraph.identity(1)
        for ev in random_events(3, 300, seed=2):
            central.observe(ev)
            fleet_learn_tick(fleet, graph, [ev])
        assert np.array_equal(fleet.q_hat[0], central.q.values)
        assert np.array_equal(fleet.f_hat[0], central.rates.f)
        assert np.array_equal(fleet.g_hat[0], central.rates.g)

    def test_agent_sum_grows_by_injected_input(self):
        warm = table(np.zeros(4))
        fleet = FleetLearnState.initial(warm, n_agents=4)
        graph = build_graph([(0, 0), (1, 0), (2, 0), (3, 0)], comm_radius=1.0)
        events = random_events(2, 4 * 40, seed=5, none_share=0.0)
        for t in range(40):
            batch = [events[4 * t + i] if (t + i) % 2 == 0 else None for i in range(4)]
            total_before = fleet.q_hat.sum(axis=0)
            records = fleet_learn_tick(fleet, graph, batch)
            injected = np.zeros(4)
            for rec in records:
                injected[rec.pair] += rec.injected
            assert np.allclose(fleet.q_hat.sum(axis=0) - total_before, injected)

    def test_average_follows_centralized_inputs(self):
        warm = table(np.zeros(4))
        fleet = FleetLearnState.initial(warm, n_agents=2)
        graph = CommGraph.complete(2)
        records = fleet_learn_tick(
            fleet, graph, [SarsaUpdateEvent(0, 1, 1, 1, 3.0), None]
        )
        assert len(records) == 1
        rec = records[0]
        assert rec.r == pytest.approx(3.0)
        # Average moves by alpha * r, as one centralized step would
        assert fleet.average_q().get(0, 1) == pytest.approx(rec.alpha * rec.r)
        assert rec.injected == pytest.approx(2 * rec.alpha * rec.r)

    def test_unit_rate_shifts_average_by_reward(self):
        fleet = FleetLearnState.initial(table(np.zeros(4)), n_agents=3)
        pair = fleet.index.pair(0, 1)
        # Moments already matching the tracked gradient give alpha = 1
        fleet.f_hat[0, pair] = -3.0
        fleet.g_hat[0, pair] = 9.0
        rec = fleet_learn_tick(
            fleet, CommGraph.complete(3), [SarsaUpdateEvent(0, 1, 1, 1, 1.0), None, None]
        )[0]
        assert rec.alpha == pytest.approx(1.0)
        assert fleet.q_hat[:, pair].mean() == pytest.approx(1.0)

    def test_local_correction_hand_arithmetic(self):
        fleet = FleetLearnState.initial(table([0, 3, 0, 4], gamma=0.5), n_agents=1)
        r, pair = local_correction(fleet.agents[0], SarsaUpdateEvent(0, 1, 1, 1, 1.0), 0.5)
        assert r == pytest.approx(0.0)
        assert pair == 1

    def test_no_events_keeps_agreeing_fleet(self):
        fleet = FleetLearnState.initial(table([1, 2, 3, 4]), n_agents=3)
        fleet_learn_tick(fleet, CommGraph.complete(3), [None, None, None])
        assert np.allclose(fleet.q_hat, [1, 2, 3, 4])
        assert disagreement(fleet) == pytest.approx(0.0)

    def test_event_count_checked(self):
        fleet = FleetLearnState.initial(table([0, 0, 0, 0]), n_agents=2)
        with pytest.raises(ShapeMismatchError):
            fleet_learn_tick(fleet, CommGraph.identity(2), [None])
        with pytest.raises(ShapeMismatchError):
            fleet_learn_tick(fleet, CommGraph.identity(3), [None, None])

    def test_local_correction_without_event(self):
        fleet = FleetLearnState.initial(table([0, 0, 0, 0]), n_agents=1)
        assert local_correction(fleet.agents[0], None, 0.8) == (0.0, None)

    def test_record_to_dict(self):
        fleet = FleetLearnState.initial(table([0, 0, 0, 0]), n_agents=1)
        rec = fleet_learn_tick(fleet, CommGraph.identity(1), [SarsaUpdateEvent(1, 0, 0, None, 1.0)])[0]
        assert set(rec.to_dict()) == {"agent", "pair", "r", "alpha", "injected", "underflow"}


class TestDisagreement:
    """Max-norm spread of agent estimates."""

    def test_spread(self):
        assert disagreement(np.array([[0.0, 1.0], [2.0, 1.5]])) == pytest.approx(2.0)

    def test_empty(self):
        assert disagreement([]) == 0.0
        assert disagreement(np.zeros((0, 4))) == 0.0
