"""Tests for fleetrl.consensus: proximity graphs and dynamic average tracking."""

import numpy as np
import pytest

from fleetrl.consensus.graph import (
    CommGraph,
    build_graph,
    check_periodic_connectivity,
    export_schedule,
    load_schedule,
    metropolis_weights,
)
from fleetrl.consensus.tracking import (
    TrackerState,
    consensus_term,
    dense_inputs,
    error_bounds,
    second_singular_value,
    track_step,
)
from fleetrl.exceptions import ShapeMismatchError


def path_graph(n):
    return build_graph([(float(i), 0.0) for i in range(n)], comm_radius=1.0)


def pair_graph(n, i, j):
    adj = np.zeros((n, n), dtype=bool)
    adj[i, j] = adj[j, i] = True
    return CommGraph(metropolis_weights(adj))


class TestMetropolisWeights:
    """Weight construction."""

    def test_two_agents_in_range(self):
        graph = build_graph([(0.0, 0.0), (1.0, 0.0)], comm_radius=2.0)
        assert np.allclose(graph.weights, [[0.5, 0.5], [0.5, 0.5]])

    def test_all_out_of_range(self):
        graph = build_graph([(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)], comm_radius=2.0)
        assert np.array_equal(graph.weights, np.eye(3))

    def test_path_of_three(self):
        w = path_graph(3).weights
        assert w[0, 1] == pytest.approx(1 / 3)
        assert w[1, 2] == pytest.approx(1 / 3)
        assert w[0, 2] == 0.0
        assert np.diag(w) == pytest.approx([2 / 3, 1 / 3, 2 / 3])

    def test_random_positions_doubly_stochastic(self):
        rng = np.random.default_rng(4)
        graph = build_graph(rng.random((12, 2)) * 10, comm_radius=3.0)
        assert graph.is_doubly_stochastic()
        assert np.allclose(graph.weights, graph.weights.T)

    def test_radius_is_inclusive(self):
        graph = build_graph([(0.0, 0.0), (3.0, 4.0)], comm_radius=5.0)
        assert graph.neighbors(0) == [1]

    def test_isolated_agent_keeps_its_estimate(self):
        graph = build_graph([(0.0, 0.0), (0.5, 0.0), (50.0, 50.0)], comm_radius=1.0)
        assert graph.weights[2].tolist() == [0.0, 0.0, 1.0]
        assert graph.neighbors(2) == []

    def test_empty_fleet(self):
        assert build_graph([], comm_radius=1.0).n_agents == 0

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            build_graph([(0.0, 0.0)], comm_radius=0.0)

    def test_weights_are_read_only(self):
        with pytest.raises(ValueError):
            path_graph(2).weights[0, 0] = 0.0

    def test_non_square_rejected(self):
        with pytest.raises(ShapeMismatchError):
            CommGraph(np.zeros((2, 3)))


class TestCommGraph:
    """Graph accessors."""

    def test_edges_and_networkx(self):
        graph = path_graph(3)
        assert graph.edges() == [(0, 1), (1, 0), (1, 2), (2, 1)]
        assert graph.to_networkx().number_of_edges() == 4
        assert graph.nondegeneracy() == pytest.approx(1 / 3)

    def test_identity_has_no_edges(self):
        assert CommGraph.identity(3).nondegeneracy() is None

    def test_complete(self):
        assert CommGraph.complete(4).is_doubly_stochastic()


class TestPeriodicConnectivity:
    """Jointly strongly connected windows."""

    def test_alternating_pairs(self):
        graphs = [pair_graph(3, 0, 1), pair_graph(3, 1, 2)] * 3
        assert check_periodic_connectivity(graphs, b=2)
        assert not check_periodic_connectivity(graphs, b=1)

    def test_short_sequence_fails(self):
        assert not check_periodic_connectivity([path_graph(3)], b=2)

    def test_single_agent(self):
        assert check_periodic_connectivity([CommGraph.identity(1)], b=1)

    def test_bad_window(self):
        with pytest.raises(ValueError):
            check_periodic_connectivity([path_graph(2)], b=0)


class TestSchedule:
    """CSV export and reload of graph sequences."""

    def test_round_trip(self, tmp_path):
        graphs = [path_graph(3), pair_graph(3, 0, 2), CommGraph.identity(3)]
        path = export_schedule(graphs, tmp_path / "schedule.csv")
        loaded = load_schedule(path, n_agents=3)
        assert len(loaded) == 3
        for a, b in zip(graphs, loaded):
            assert np.allclose(a.weights, b.weights)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_schedule(tmp_path / "none.csv")

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("tick,i,j\n0,0,0\n", encoding="utf-8")
        with pytest.raises(ValueError, match="weight"):
            load_schedule(path)


class TestTracking:
    """Average tracking rounds."""

    def test_dense_inputs_from_sparse(self):
        arr = dense_inputs([{1: 2.0}, None, {0: -1.0, 1: 1.0}], n_agents=3, size=2)
        assert arr.tolist() == [[0.0, 2.0], [0.0, 0.0], [-1.0, 1.0]]

    def test_dense_inputs_offset_checked(self):
        with pytest.raises(ShapeMismatchError):
            dense_inputs([{5: 1.0}], n_agents=1, size=2)

    def test_consensus_term_zero_for_isolated(self):
        x = np.array([[1.0], [5.0]])
        assert not consensus_term(x, CommGraph.identity(2)).any()

    def test_sum_grows_by_inputs(self):
        rng = np.random.default_rng(0)
        graph = path_graph(4)
        ts = TrackerState(rng.normal(size=(4, 3)), np.zeros((4, 3)))
        inputs = rng.normal(size=(4, 3))
        nxt = track_step(ts, graph, inputs)
        assert np.allclose(nxt.estimates.sum(axis=0), ts.estimates.sum(axis=0) + inputs.sum(axis=0))
        assert np.array_equal(nxt.last_input, inputs)

    def test_differential_tracks_current_average(self):
        graph = path_graph(3)
        inputs = np.array([[3.0], [0.0], [6.0]])
        ts = TrackerState.replicated(np.zeros(1), 3)
        for _ in range(300):
            ts = track_step(ts, graph, inputs, differential=True)
        assert np.allclose(ts.estimates, 3.0)

    def test_graph_size_checked(self):
        ts = TrackerState.replicated(np.zeros(2), 2)
        with pytest.raises(ShapeMismatchError):
            track_step(ts, CommGraph.identity(3), np.zeros((2, 2)))


class TestErrorBounds:
    """Tracking error bounds over a graph sequence."""

    def test_second_singular_value(self):
        assert second_singular_value(CommGraph.identity(3)) == pytest.approx(1.0)
        assert second_singular_value(CommGraph.complete(3)) == pytest.approx(0.0, abs=1e-12)
        assert second_singular_value(CommGraph.identity(1)) == 0.0

    def test_complete_graph_bound(self):
        bounds = error_bounds([CommGraph.complete(4)] * 5, r_max=1.5, dr_max=2.0)
        assert bounds.delta_q == pytest.approx(2 * 2 * 1.5)
        assert bounds.delta_omega == pytest.approx(2 * 2 * 2.0)
        assert bounds.finite
        assert bounds.ticks == 5

    def test_disconnected_is_infinite(self, caplog):
        with caplog.at_level("WARNING"):
            bounds = error_bounds([CommGraph.identity(3)], r_max=1.0, dr_max=1.0)
        assert not bounds.finite
        assert bounds.to_dict()["delta_q"] == "inf"
        assert "infinite" in caplog.text

    def test_empty_sequence(self):
        with pytest.raises(ValueError):
            error_bounds([], 1.0, 1.0)


class TestReferenceExamples:
    """Small cases worked out by hand."""

    def test_equal_estimates_without_input_are_fixed(self):
        ts = TrackerState.replicated(np.array([1.0, -2.0]), 3)
        nxt = track_step(ts, path_graph(3), np.zeros((3, 2)))
        assert np.array_equal(nxt.estimates, ts.estimates)

    def test_complete_graph_averages_in_one_step(self):
        ts = TrackerState(np.array([[0.0, 4.0], [2.0, 0.0]]), np.zeros((2, 2)))
        nxt = track_step(ts, CommGraph.complete(2), np.zeros((2, 2)))
        assert np.allclose(nxt.estimates, [[1.0, 2.0], [1.0, 2.0]])

    def test_two_agent_complete_bound(self):
        bounds = error_bounds([CommGraph.complete(2)], r_max=1.0, dr_max=0.0)
        assert bounds.delta_q == pytest.approx(2 * np.sqrt(2))
        assert bounds.delta_omega == 0.0

    def test_static_connected_graph(self):
        assert check_periodic_connectivity([path_graph(4)] * 3, b=1)

    def test_isolated_node_never_connects(self):
        graphs = [pair_graph(3, 0, 1)] * 4
        assert not any(check_periodic_connectivity(graphs, b) for b in range(1, 5))
