"""fleetrl - Multi-agent taxi fleet routing with distributed SARSA.

A fleet of autonomous taxis learns where to work from completed rides.
Each agent keeps its own Q table over grid cells and keeps it close to the
fleet average by exchanging estimates with nearby agents; requests are
split among agents by a potential game played with log-linear learning.

Key Features:
    - Demand models estimated from trip records or generated synthetically
    - MDP warm start solved by modified policy iteration
    - Adaptive-rate SARSA, centralized or distributed by average tracking
    - Task assignment with optional ride-pooling
    - Seeded, reproducible simulations with CSV run metrics
    - Matched-seed policy comparisons and error-bound reports

Quick Start:
    from fleetrl import SimConfig, create_simulator

    sim = create_simulator(SimConfig(n_agents=10, horizon=500, seed=1))
    metrics = sim.run()
    metrics.export("runs/" + metrics.run_id)

Classes:
    FleetSimulator: Runs one simulation
    SimConfig: Configuration of a run
    RunMetrics: Revenue, trips and learning traces of a run
    Policy: Enum of dispatch policies

See Also:
    - README.md for full documentation
    - configs/ for example configuration files
"""

__version__ = "1.0.0"
__author__ = "CIPS Corp"
__license__ = "MIT"

from typing import Optional, Union
from pathlib import Path

# Configuration
from .config import (
    BoundsConfig,
    DemandKind,
    DemandSourceConfig,
    DriftKind,
    DriftSchedule,
    GameConfig,
    GridConfig,
    LearningConfig,
    Policy,
    SimConfig,
    StopRule,
    SweepConfig,
    SyntheticScenario,
    load_json_config,
)

# Errors
from .exceptions import (
    ConfigError,
    ConvergenceError,
    FleetRLError,
    IngestError,
    ModelError,
    ShapeMismatchError,
    SweepMismatchError,
)

# Models and solvers
from .demand import DemandModel, estimate_demand, ingest_trips, synth_demand
from .mdp import MdpModel, QTable, build_mdp, kappa_bound, solve_mpi

# Simulation
from .sim import FleetSimulator, RunMetrics, compare_runs, run

__all__ = [
    # Version info
    "__version__",
    "__author__",
    "__license__",
    # Configuration
    "BoundsConfig",
    "DemandKind",
    "DemandSourceConfig",
    "DriftKind",
    "DriftSchedule",
    "GameConfig",
    "GridConfig",
    "LearningConfig",
    "Policy",
    "SimConfig",
    "StopRule",
    "SweepConfig",
    "SyntheticScenario",
    "load_json_config",
    # Errors
    "ConfigError",
    "ConvergenceError",
    "FleetRLError",
    "IngestError",
    "ModelError",
    "ShapeMismatchError",
    "SweepMismatchError",
    # Models and solvers
    "DemandModel",
    "estimate_demand",
    "ingest_trips",
    "synth_demand",
    "MdpModel",
    "QTable",
    "build_mdp",
    "kappa_bound",
    "solve_mpi",
    # Simulation
    "FleetSimulator",
    "RunMetrics",
    "compare_runs",
    "run",
    "create_simulator",
]


def create_simulator(
    config: Union[SimConfig, str, Path],
    seed: Optional[int] = None,
) -> FleetSimulator:
    """Convenience function to build a simulator from a config or JSON file.

    Args:
        config: SimConfig instance or path to a JSON simulation config
        seed: Overrides the config's seed when given

    Returns:
        FleetSimulator ready to run

    Example:
        sim = create_simulator("configs/simulation.json", seed=7)
    """
    cfg = config if isinstance(config, SimConfig) else load_json_config(config, SimConfig)
    if seed is not None:
        cfg = cfg.with_overrides({"seed": seed})
    return FleetSimulator(cfg)
