"""SARSA learners: centralized adaptive-rate and distributed consensus."""

from .adaptive import (
    AdaptiveRateState,
    CentralizedLearner,
    GradientVarianceMonitor,
    RateUpdate,
    SarsaUpdateEvent,
    StepRecord,
    alpha_error_bound,
    loss_gradient,
    optimal_rate,
    rate_from_moments,
    sarsa_step,
    update_rate,
)
from .distributed import (
    AgentLearnState,
    FleetLearnState,
    LearnRecord,
    disagreement,
    fleet_learn_tick,
    local_correction,
)

__all__ = [
    "AdaptiveRateState",
    "CentralizedLearner",
    "GradientVarianceMonitor",
    "RateUpdate",
    "SarsaUpdateEvent",
    "StepRecord",
    "alpha_error_bound",
    "loss_gradient",
    "optimal_rate",
    "rate_from_moments",
    "sarsa_step",
    "update_rate",
    "AgentLearnState",
    "FleetLearnState",
    "LearnRecord",
    "disagreement",
    "fleet_learn_tick",
    "local_correction",
]
