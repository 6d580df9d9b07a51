"""Communication graphs and the average-tracking primitive."""

from .graph import (
    CommGraph,
    build_graph,
    check_periodic_connectivity,
    export_schedule,
    load_schedule,
    metropolis_weights,
)
from .tracking import (
    ErrorBounds,
    TrackerState,
    consensus_term,
    error_bounds,
    second_singular_value,
    track_step,
)

__all__ = [
    "CommGraph",
    "build_graph",
    "check_periodic_connectivity",
    "export_schedule",
    "load_schedule",
    "metropolis_weights",
    "ErrorBounds",
    "TrackerState",
    "consensus_term",
    "error_bounds",
    "second_singular_value",
    "track_step",
]
