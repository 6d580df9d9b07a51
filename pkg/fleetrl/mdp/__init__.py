"""MDP warm start: model construction, solvers, value tables and drift bounds."""

from .bounds import KappaBound, ModelDrift, kappa_bound, model_drift, reward_sup_norm
from .model import MdpModel, build_mdp, reward_matrix
from .qtable import ActionIndex, QTable, RankedPolicy
from .solver import (
    bellman_backup,
    bellman_residual,
    solve_mpi,
    solve_value_iteration,
)

__all__ = [
    "KappaBound",
    "ModelDrift",
    "kappa_bound",
    "model_drift",
    "reward_sup_norm",
    "MdpModel",
    "build_mdp",
    "reward_matrix",
    "ActionIndex",
    "QTable",
    "RankedPolicy",
    "bellman_backup",
    "bellman_residual",
    "solve_mpi",
    "solve_value_iteration",
]
