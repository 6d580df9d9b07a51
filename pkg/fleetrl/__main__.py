"""CLI entry point for fleetrl.

Usage:
    fleetrl estimate --trips PATH --out DIR [--config GRID_JSON] [--window TICKS]
    fleetrl solve --model PATH --out DIR [--gamma GAMMA]
    fleetrl simulate --config SIM_JSON --out DIR [--seed SEED]
    fleetrl sweep --config SWEEP_JSON --out DIR [--seed SEED]
    fleetrl verify-bounds --config BOUNDS_JSON [--out DIR]

Commands:
    estimate       Estimate a demand model from a trip file
    solve          Solve the MDP of a demand model (or a saved MDP) for the warm-start Q table
    simulate       Run one fleet simulation and export its metrics
    sweep          Run a matched-seed policy sweep and write the revenue-ratio table
    verify-bounds  Evaluate the drift bound and the consensus tracking bounds

Exit codes: 0 success, 1 internal error, 2 invalid input.
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from fleetrl import __version__
from fleetrl.config import BoundsConfig, GridConfig, SimConfig, SweepConfig, load_json_config
from fleetrl.consensus.graph import CommGraph, load_schedule
from fleetrl.consensus.tracking import error_bounds
from fleetrl.demand.estimate import MODEL_KIND as DEMAND_KIND, DemandModel, estimate_demand
from fleetrl.demand.geometry import GridGeometry
from fleetrl.demand.trips import ingest_trips
from fleetrl.exceptions import ConfigError, ConvergenceError, FleetRLError, ModelError
from fleetrl.mdp.bounds import kappa_bound, model_drift, reward_sup_norm
from fleetrl.mdp.model import MODEL_KIND as MDP_KIND, MdpModel, build_mdp
from fleetrl.mdp.solver import bellman_residual, solve_mpi
from fleetrl.sim.compare import run_sweep
from fleetrl.sim.engine import FleetSimulator
from fleetrl.sim.metrics import RunMetrics, run_dir_name
from fleetrl.utils.hashing import canonical_json
from fleetrl.utils.logging import configure_root_logger

logger = logging.getLogger("fleetrl.cli")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2


@dataclass
class RunManifest:
    """What a command was run with and what it wrote.

    Attributes:
        subcommand: Command name
        config: Config file used, if any
        seed: Seed override, if any
        out: Output directory
        version: fleetrl version
        outputs: Files and directories written, relative to ``out``
    """
    subcommand: str
    config: Optional[str]
    seed: Optional[int]
    out: str
    version: str = __version__
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "out": self.out,
            "version": self.version,
            "outputs": sorted(self.outputs),
        }

    def write(self) -> Path:
        path = Path(self.out) / "manifest.json"
        path.write_text(canonical_json(self.to_dict()), encoding="utf-8")
        return path


def prepare_out_dir(out: str) -> Path:
    """Create ``out``, refusing to write into a non-empty directory.

    Raises:
        ConfigError: If ``out`` is a file or a non-empty directory
    """
    path = Path(out)
    if path.exists():
        if not path.is_dir():
            raise ConfigError(f"Output path {path} is not a directory")
        if any(path.iterdir()):
            raise ConfigError(f"Output directory {path} is not empty")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(args: argparse.Namespace) -> RunManifest:
    config = getattr(args, "config", None)
    return RunManifest(
        subcommand=args.command,
        config=str(config) if config else None,
        seed=getattr(args, "seed", None),
        out=str(args.out),
    )


def cmd_estimate(args: argparse.Namespace) -> int:
    """Handle the 'estimate' command - trip file to demand model.

    Args:
        args: Parsed CLI arguments

    Returns:
        Exit code
    """
    grid = load_json_config(args.config, GridConfig) if args.config else GridConfig()
    geometry = GridGeometry.from_config(grid)
    ingested = ingest_trips(args.trips, geometry, delimiter=args.delimiter)
    model = estimate_demand(ingested.records, geometry.n_q, window=args.window)

    out = prepare_out_dir(args.out)
    model.save(out / "demand_model.json")
    stats = ingested.stats.to_dict()
    (out / "ingest_stats.json").write_text(canonical_json(stats), encoding="utf-8")
    manifest = _manifest(args)
    manifest.outputs = ["demand_model.json", "ingest_stats.json"]
    manifest.write()

    print(f"Demand model written to: {out / 'demand_model.json'}")
    print(f"  Cells: {model.n_q}")
    print(f"  Windows: {model.windows}")
    print(f"  Rows: {stats['total_rows']} total, {stats['accepted']} accepted, {stats['rejected']} rejected")
    return EXIT_OK


def _load_mdp(path: Path, gamma: Optional[float]) -> MdpModel:
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelError(f"Malformed model file {path}: {e}") from e
    kind = data.get("kind")
    if kind == DEMAND_KIND:
        return build_mdp(DemandModel.from_dict(data), gamma if gamma is not None else 0.8)
    if kind == MDP_KIND:
        mdp = MdpModel.from_dict(data)
        if gamma is not None and gamma != mdp.gamma:
            mdp = MdpModel(mdp.index, mdp.P, mdp.R, gamma, mdp.P_bar, mdp.R_bar)
        return mdp
    raise ModelError(f"{path} is neither a demand model nor an MDP (kind={kind!r})")


def cmd_solve(args: argparse.Namespace) -> int:
    """Handle the 'solve' command - warm-start Q table by policy iteration.

    Args:
        args: Parsed CLI arguments

    Returns:
        Exit code
    """
    mdp = _load_mdp(Path(args.model), args.gamma)
    q, policy = solve_mpi(mdp)

    out = prepare_out_dir(args.out)
    q.save(out / "qtable.json")
    policy.save(out / "policy.json")
    residual = bellman_residual(mdp, q)
    summary = {"n_q": mdp.n_q, "gamma": mdp.gamma, "pairs": mdp.index.size, "bellman_residual": residual}
    (out / "solve_summary.json").write_text(canonical_json(summary), encoding="utf-8")
    manifest = _manifest(args)
    manifest.config = str(args.model)
    manifest.outputs = ["policy.json", "qtable.json", "solve_summary.json"]
    manifest.write()

    print(f"Q table written to: {out / 'qtable.json'}")
    print(f"  Cells: {mdp.n_q}, state-action pairs: {mdp.index.size}, gamma: {mdp.gamma}")
    print(f"  Bellman residual: {residual:.3e}")
    if mdp.n_q == 1:
        print(f"  Q(0, 0) = {q.values[0]:.6g}")
    return EXIT_OK


def _sim_config(args: argparse.Namespace) -> SimConfig:
    cfg = load_json_config(args.config, SimConfig)
    if args.seed is not None:
        cfg = cfg.with_overrides({"seed": args.seed})
    return cfg


def _print_summary(metrics: RunMetrics) -> None:
    s = metrics.summary()
    print(f"  Policy: {s['policy']}  seed: {s['seed']}  agents: {s['n_agents']}")
    print(f"  Ticks: {s['ticks']} / {s['horizon']}" + ("  (demand exhausted)" if s["ended_early"] else ""))
    print(f"  Revenue: {s['total_revenue']:.2f} over {s['trips']} trips ({s['per_trip_mean']:.2f} per trip)")
    print(f"  Requests: {s['requests']} spawned, {s['expired']} expired")


def cmd_simulate(args: argparse.Namespace) -> int:
    """Handle the 'simulate' command - one run, exported under --out.

    Args:
        args: Parsed CLI arguments

    Returns:
        Exit code
    """
    cfg = _sim_config(args)
    out = prepare_out_dir(args.out)
    metrics = FleetSimulator(cfg).run()
    run_dir = metrics.export(out / run_dir_name(cfg))
    (out / "config.json").write_text(canonical_json(cfg.to_dict()), encoding="utf-8")
    manifest = _manifest(args)
    manifest.outputs = [run_dir.name, "config.json"]
    manifest.write()

    print(f"Run written to: {run_dir}")
    _print_summary(metrics)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """Handle the 'sweep' command - matched-seed comparison table.

    Args:
        args: Parsed CLI arguments

    Returns:
        Exit code
    """
    sweep = load_json_config(args.config, SweepConfig)
    if args.seed is not None:
        sweep.seeds = [args.seed]
    out = prepare_out_dir(args.out)
    comparison = run_sweep(sweep, out_dir=out / "runs")
    comparison.export(out)
    manifest = _manifest(args)
    manifest.outputs = ["comparison.csv", "runs", "runs.csv"]
    manifest.write()

    print(f"Sweep of {len(comparison.runs)} runs written to: {out}")
    for row in comparison.ratios.itertuples(index=False):
        label = row.point or "(base)"
        print(f"  {label:<32} {row.policy:<18} ratio {row.ratio:.4f} over {row.seeds} seed(s)")
    return EXIT_OK


def _bounds_graphs(cfg: BoundsConfig) -> List[CommGraph]:
    if cfg.schedule is not None:
        graphs = load_schedule(cfg.schedule)
        return graphs[cfg.warmup:]

    assert cfg.simulation is not None
    sim_cfg = load_json_config(cfg.simulation, SimConfig).with_overrides({"record_graphs": True})
    metrics = FleetSimulator(sim_cfg).run()
    if cfg.r_max is None or cfg.dr_max is None:
        injected = [abs(row["injected"]) for row in metrics.telemetry]
        gradients = [abs(sim_cfg.n_agents * row["r"]) for row in metrics.telemetry]
        if cfg.r_max is None:
            cfg.r_max = max(injected, default=0.0)
        if cfg.dr_max is None:
            # An input replaces the previous one, so the change is at most twice the largest input
            cfg.dr_max = 2.0 * max(gradients, default=0.0)
    return metrics.graphs[cfg.warmup:]


def cmd_verify_bounds(args: argparse.Namespace) -> int:
    """Handle the 'verify-bounds' command - drift and tracking bounds.

    Args:
        args: Parsed CLI arguments

    Returns:
        Exit code
    """
    cfg = load_json_config(args.config, BoundsConfig)
    if not cfg.has_kappa_inputs and not cfg.has_graph_inputs:
        raise ConfigError("verify-bounds needs drift inputs or a graph schedule/simulation")

    report: Dict[str, Any] = {}
    if cfg.has_kappa_inputs:
        if cfg.model_a is not None and cfg.model_b is not None:
            mdp_a = build_mdp(DemandModel.load(cfg.model_a), cfg.gamma)
            mdp_b = build_mdp(DemandModel.load(cfg.model_b), cfg.gamma)
            drift = model_drift(mdp_a, mdp_b)
            epsilon, delta = drift.epsilon, drift.delta
            r_inf = max(reward_sup_norm(mdp_a), reward_sup_norm(mdp_b))
        else:
            assert cfg.epsilon is not None and cfg.delta is not None and cfg.r_inf is not None
            epsilon, delta, r_inf = cfg.epsilon, cfg.delta, cfg.r_inf
        bound = kappa_bound(epsilon, delta, cfg.gamma, r_inf)
        report["drift"] = {
            "epsilon": epsilon,
            "delta": delta,
            "gamma": cfg.gamma,
            "r_inf": r_inf,
            "d": bound.d,
            "kappa": bound.kappa,
        }
        print(f"Drift bound (epsilon={epsilon:.6g}, delta={delta:.6g}, gamma={cfg.gamma}, r_inf={r_inf:.6g}):")
        print(f"  d = {bound.d:.6g}")
        print(f"  kappa = {bound.kappa:.6g}")

    if cfg.has_graph_inputs:
        graphs = _bounds_graphs(cfg)
        if not graphs:
            raise ConfigError(f"No communication graphs left after a warm-up of {cfg.warmup} ticks")
        bounds = error_bounds(graphs, float(cfg.r_max or 0.0), float(cfg.dr_max or 0.0))
        report["tracking"] = {**bounds.to_dict(), "r_max": cfg.r_max, "dr_max": cfg.dr_max}
        print(f"Tracking bounds over {bounds.ticks} ticks ({bounds.n_agents} agents):")
        print(f"  sigma_2 = {bounds.sigma:.6g}")
        print(f"  delta_Q = {bounds.delta_q:.6g}")
        print(f"  delta_omega = {bounds.delta_omega:.6g}")
        if not bounds.finite:
            print("  WARNING: the graphs never mix (sigma_2 = 1); tracking bounds are infinite")

    if args.out:
        out = prepare_out_dir(args.out)
        (out / "bounds.json").write_text(canonical_json(report), encoding="utf-8")
        manifest = _manifest(args)
        manifest.outputs = ["bounds.json"]
        manifest.write()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Build the CLI argument parser.

    Returns:
        Configured ArgumentParser instance
    """
    parser = argparse.ArgumentParser(
        prog="fleetrl",
        description="Multi-agent taxi fleet routing with distributed SARSA",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    est = subparsers.add_parser("estimate", help="Estimate a demand model from trips")
    est.add_argument("--trips", required=True, help="Delimited trip file")
    est.add_argument("--config", help="Grid config JSON (default: 7 x 11 cells of 2 km)")
    est.add_argument("--window", type=int, default=1, help="Window length in ticks (default: 1)")
    est.add_argument("--delimiter", default=",", help="Field separator (default: ',')")
    est.add_argument("--out", required=True, help="Output directory")

    solve = subparsers.add_parser("solve", help="Solve an MDP for the warm-start Q table")
    solve.add_argument("--model", required=True, help="Demand model or MDP model JSON")
    solve.add_argument("--gamma", type=float, help="Discount factor (default: 0.8, or the MDP's own)")
    solve.add_argument("--out", required=True, help="Output directory")

    sim = subparsers.add_parser("simulate", help="Run one simulation")
    sim.add_argument("--config", required=True, help="Simulation config JSON")
    sim.add_argument("--seed", type=int, help="Override the config's seed")
    sim.add_argument("--out", required=True, help="Output directory")

    sweep = subparsers.add_parser("sweep", help="Run a matched-seed policy sweep")
    sweep.add_argument("--config", required=True, help="Sweep config JSON")
    sweep.add_argument("--seed", type=int, help="Run only this seed")
    sweep.add_argument("--out", required=True, help="Output directory")

    vb = subparsers.add_parser("verify-bounds", help="Evaluate drift and tracking bounds")
    vb.add_argument("--config", required=True, help="Bounds config JSON")
    vb.add_argument("--out", help="Also write bounds.json here")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the CLI.

    Returns:
        Exit code (0 success, 1 internal error, 2 invalid input)
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_OK

    configure_root_logger(level=logging.DEBUG if args.verbose else logging.INFO)

    commands = {
        "estimate": cmd_estimate,
        "solve": cmd_solve,
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "verify-bounds": cmd_verify_bounds,
    }

    handler = commands.get(args.command)
    if handler is None:
        parser.print_help()
        return EXIT_INTERNAL
    try:
        return handler(args)
    except ConvergenceError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except (FleetRLError, ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
