"""Tests for the fleetrl command line."""

import json
import logging

import pandas as pd
import pytest

from fleetrl.__main__ import EXIT_INPUT, EXIT_INTERNAL, EXIT_OK, build_parser, main, prepare_out_dir
from fleetrl.consensus.graph import CommGraph, export_schedule
from fleetrl.exceptions import ConfigError, ConvergenceError
from fleetrl.mdp.model import MdpModel
from fleetrl.mdp.qtable import ActionIndex, QTable


@pytest.fixture(autouse=True)
def restore_root_logger():
    """main() reconfigures the root logger; put it back after each test."""
    root = logging.getLogger()
    saved = list(root.handlers), root.level
    yield
    root.handlers[:] = saved[0]
    root.setLevel(saved[1])


@pytest.fixture
def sim_payload():
    return {
        "n_agents": 2,
        "horizon": 5,
        "seed": 1,
        "policy": "greedy",
        "demand": {
            "kind": "synthetic",
            "scenario": {"grid": {"rows": 2, "cols": 2, "cell_km": 1.0}, "base_rate": 0.05},
        },
        "game": {"r_c": 1.0, "comm_radius": 2.0},
    }


class TestParser:
    """Argument parsing."""

    def test_no_command_prints_help(self, capsys):
        assert main([]) == EXIT_OK
        assert "estimate" in capsys.readouterr().out

    def test_required_arguments(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["solve"])

    def test_defaults(self):
        args = build_parser().parse_args(["estimate", "--trips", "t.csv", "--out", "o"])
        assert args.window == 1
        assert args.delimiter == ","


class TestOutDir:
    """Output directory guard."""

    def test_creates_missing(self, tmp_path):
        assert prepare_out_dir(str(tmp_path / "a" / "b")).is_dir()

    def test_empty_existing_is_fine(self, tmp_path):
        assert prepare_out_dir(str(tmp_path)) == tmp_path

    def test_non_empty_refused(self, tmp_path):
        (tmp_path / "old.txt").write_text("x", encoding="utf-8")
        with pytest.raises(ConfigError, match="not empty"):
            prepare_out_dir(str(tmp_path))


class TestEstimate:
    """estimate command."""

    def test_writes_model_and_stats(self, trip_csv, write_json, tmp_path, capsys):
        grid = write_json("grid.json", {"rows": 1, "cols": 3, "cell_km": 1.0})
        out = tmp_path / "model"
        code = main(["estimate", "--trips", str(trip_csv), "--config", str(grid), "--out", str(out)])
        assert code == EXIT_OK
        assert "1 rejected" in capsys.readouterr().out
        model = json.loads((out / "demand_model.json").read_text(encoding="utf-8"))
        assert model["n_q"] == 3
        stats = json.loads((out / "ingest_stats.json").read_text(encoding="utf-8"))
        assert stats["accepted"] == 2
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["subcommand"] == "estimate"
        assert manifest["outputs"] == ["demand_model.json", "ingest_stats.json"]

    def test_refuses_non_empty_out(self, trip_csv, tmp_path):
        out = tmp_path / "busy"
        out.mkdir()
        (out / "keep.txt").write_text("x", encoding="utf-8")
        code = main(["estimate", "--trips", str(trip_csv), "--out", str(out)])
        assert code == EXIT_INPUT
        assert not (out / "demand_model.json").exists()

    def test_missing_trip_file(self, tmp_path):
        code = main(["estimate", "--trips", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o")])
        assert code == EXIT_INPUT


class TestSolve:
    """solve command."""

    def test_single_cell_mdp(self, tmp_path, capsys):
        path = MdpModel(ActionIndex([[0]]), [[1.0]], [[2.0]], 0.8).save(tmp_path / "mdp.json")
        out = tmp_path / "solved"
        assert main(["solve", "--model", str(path), "--out", str(out)]) == EXIT_OK
        assert "Q(0, 0) = 10" in capsys.readouterr().out
        q = QTable.load(out / "qtable.json")
        assert q.values[0] == pytest.approx(10.0, abs=1e-6)
        assert (out / "policy.json").exists()

    def test_demand_model_input(self, two_cell_model, tmp_path):
        path = two_cell_model.save(tmp_path / "demand.json")
        out = tmp_path / "solved"
        assert main(["solve", "--model", str(path), "--gamma", "0.5", "--out", str(out)]) == EXIT_OK
        summary = json.loads((out / "solve_summary.json").read_text(encoding="utf-8"))
        assert summary["gamma"] == 0.5
        assert summary["bellman_residual"] < 1e-6

    def test_missing_model(self, tmp_path):
        code = main(["solve", "--model", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")])
        assert code == EXIT_INPUT

    def test_wrong_kind(self, write_json, tmp_path):
        path = write_json("other.json", {"kind": "something-else"})
        assert main(["solve", "--model", str(path), "--out", str(tmp_path / "o")]) == EXIT_INPUT

    def test_solver_failure_is_a_runtime_error(self, monkeypatch, tmp_path, capsys):
        def stalled(mdp, **kwargs):
            raise ConvergenceError("Policy iteration did not converge", 0.5, 3)

        monkeypatch.setattr("fleetrl.__main__.solve_mpi", stalled)
        path = MdpModel(ActionIndex([[0]]), [[1.0]], [[2.0]], 0.8).save(tmp_path / "mdp.json")
        code = main(["solve", "--model", str(path), "--out", str(tmp_path / "solved")])
        assert code == EXIT_INTERNAL
        assert "did not converge" in capsys.readouterr().err


class TestSimulate:
    """simulate command."""

    def test_run_directory(self, sim_payload, write_json, tmp_path, capsys):
        cfg = write_json("sim.json", sim_payload)
        out = tmp_path / "sim"
        assert main(["simulate", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == EXIT_OK
        assert "Revenue" in capsys.readouterr().out
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["seed"] == 3
        (run_dir,) = [p for p in out.iterdir() if p.name.startswith("run-")]
        assert run_dir.name.endswith("-s3")
        assert (run_dir / "summary.json").exists()
        saved = json.loads((out / "config.json").read_text(encoding="utf-8"))
        assert saved["seed"] == 3

    def test_bad_config(self, write_json, tmp_path):
        cfg = write_json("sim.json", {"n_agents": 2, "speed": -1.0})
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INPUT


class TestSweep:
    """sweep command."""

    def test_comparison_table(self, sim_payload, write_json, tmp_path):
        cfg = write_json(
            "sweep.json",
            {
                "base": sim_payload,
                "policies": ["greedy", "shortest-path"],
                "seeds": [0, 1],
                "baseline": "greedy",
            },
        )
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(cfg), "--seed", "4", "--out", str(out)]) == EXIT_OK
        runs = pd.read_csv(out / "runs.csv")
        assert set(runs["seed"]) == {4}
        assert len(runs) == 2
        ratios = pd.read_csv(out / "comparison.csv")
        assert ratios.loc[ratios["policy"] == "greedy", "seeds"].item() == 1


class TestVerifyBounds:
    """verify-bounds command."""

    def test_reference_drift_bound(self, write_json, tmp_path, capsys):
        cfg = write_json("bounds.json", {"gamma": 0.8, "epsilon": 0.2, "delta": 25.4, "r_inf": 128.6})
        out = tmp_path / "bounds"
        assert main(["verify-bounds", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        text = capsys.readouterr().out
        assert "kappa = 12828" in text
        assert "d = 641.4" in text
        report = json.loads((out / "bounds.json").read_text(encoding="utf-8"))
        assert report["drift"]["kappa"] == pytest.approx(12828, rel=1e-4)

    def test_identity_schedule_is_infinite(self, write_json, tmp_path, capsys):
        export_schedule([CommGraph.identity(3)] * 4, tmp_path / "schedule.csv")
        cfg = write_json("bounds.json", {"schedule": "schedule.csv", "r_max": 1.0, "dr_max": 1.0})
        out = tmp_path / "bounds"
        assert main(["verify-bounds", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert "infinite" in capsys.readouterr().out
        report = json.loads((out / "bounds.json").read_text(encoding="utf-8"))
        assert report["tracking"]["delta_q"] == "inf"

    def test_complete_schedule_is_finite(self, write_json, tmp_path, capsys):
        export_schedule([CommGraph.complete(4)] * 3, tmp_path / "schedule.csv")
        cfg = write_json("bounds.json", {"schedule": "schedule.csv", "r_max": 1.0, "dr_max": 0.5})
        assert main(["verify-bounds", "--config", str(cfg)]) == EXIT_OK
        assert "delta_Q = 4" in capsys.readouterr().out

    def test_nothing_to_check(self, write_json):
        cfg = write_json("bounds.json", {"gamma": 0.8})
        assert main(["verify-bounds", "--config", str(cfg)]) == EXIT_INPUT

    def test_warmup_consumes_schedule(self, write_json, tmp_path):
        export_schedule([CommGraph.complete(2)] * 2, tmp_path / "schedule.csv")
        cfg = write_json("bounds.json", {"schedule": "schedule.csv", "warmup": 5})
        assert main(["verify-bounds", "--config", str(cfg)]) == EXIT_INPUT
