"""Fleet simulation: agents, dispatch policies, the tick loop and run comparisons."""

from .agents import AgentStatus, Delivery, SimAgent, Stop, plan_route
from .compare import Comparison, check_sweep, compare_runs, point_label, run_sweep
from .engine import DemandSetup, FleetSimulator, prepare_demand, run
from .metrics import RunMetrics, config_digest, run_dir_name
from .policies import (
    CentralizedSarsaPolicy,
    DispatchPolicy,
    DistributedSarsaPolicy,
    GreedyPolicy,
    MdpStaticPolicy,
    ShortestPathPolicy,
    get_policy,
)

__all__ = [
    "AgentStatus",
    "Delivery",
    "SimAgent",
    "Stop",
    "plan_route",
    "Comparison",
    "check_sweep",
    "compare_runs",
    "point_label",
    "run_sweep",
    "DemandSetup",
    "FleetSimulator",
    "prepare_demand",
    "run",
    "RunMetrics",
    "config_digest",
    "run_dir_name",
    "CentralizedSarsaPolicy",
    "DispatchPolicy",
    "DistributedSarsaPolicy",
    "GreedyPolicy",
    "MdpStaticPolicy",
    "ShortestPathPolicy",
    "get_policy",
]
