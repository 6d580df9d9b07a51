"""Distributed task assignment as a potential game."""

from .dynamics import (
    AssignmentGame,
    AssignmentResult,
    BllStep,
    bll_round,
    brute_force_optimum,
    build_game,
    potential,
    potential_identity_check,
    resolve_conflicts,
    run_assignment,
    switch_probability,
    wlu,
)
from .tasks import (
    NULL_ACTION,
    Action,
    Profile,
    Task,
    load_instance,
    make_action,
    null_profile,
    save_instance,
)
from .utility import (
    PooledRoute,
    UtilityMode,
    UtilityModel,
    available_tasks,
    greedy_value,
    pooled_route,
    pooling_factor,
    shortest_value,
    task_value,
)

__all__ = [
    "AssignmentGame",
    "AssignmentResult",
    "BllStep",
    "bll_round",
    "brute_force_optimum",
    "build_game",
    "potential",
    "potential_identity_check",
    "resolve_conflicts",
    "run_assignment",
    "switch_probability",
    "wlu",
    "NULL_ACTION",
    "Action",
    "Profile",
    "Task",
    "load_instance",
    "make_action",
    "null_profile",
    "save_instance",
    "PooledRoute",
    "UtilityMode",
    "UtilityModel",
    "available_tasks",
    "greedy_value",
    "pooled_route",
    "pooling_factor",
    "shortest_value",
    "task_value",
]
