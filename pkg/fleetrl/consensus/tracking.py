"""Dynamic average tracking over time-varying graphs.

Every agent i keeps an estimate x^i and, each tick, mixes in its neighbors'
estimates and its own input:

    x^i <- x^i + sum_{k != i} A[i, k] * (x^k - x^i) + u^i

With a doubly stochastic A the agent sum grows by exactly the injected
inputs, so the fleet average follows the running sum of average inputs.
The differential form injects the change of each agent's input instead,
which makes x^i track the current input average rather than its sum.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import numpy as np

from ..exceptions import ShapeMismatchError
from .graph import CommGraph

logger = logging.getLogger(__name__)

SIGMA_ONE_TOL = 1e-12

SparseInput = Mapping[int, float]
LocalInputs = Union[np.ndarray, Sequence[Optional[SparseInput]]]


@dataclass
class TrackerState:
    """Stacked per-agent estimates.

    Attributes:
        estimates: Shape (N, n), row i is agent i's estimate
        last_input: Shape (N, n), the input each agent injected last tick
    """
    estimates: np.ndarray
    last_input: np.ndarray

    def __post_init__(self) -> None:
        self.estimates = np.asarray(self.estimates, dtype=float)
        self.last_input = np.asarray(self.last_input, dtype=float)
        if self.estimates.ndim != 2:
            raise ShapeMismatchError(f"Estimates must be 2D, got shape {self.estimates.shape}")
        if self.last_input.shape != self.estimates.shape:
            raise ShapeMismatchError(
                f"last_input shape {self.last_input.shape} does not match estimates {self.estimates.shape}"
            )

    @classmethod
    def replicated(cls, initial: np.ndarray, n_agents: int) -> "TrackerState":
        """Every agent starts from ``initial``; no input injected yet."""
        x = np.tile(np.asarray(initial, dtype=float), (n_agents, 1))
        return cls(x, np.zeros_like(x))

    @property
    def n_agents(self) -> int:
        return int(self.estimates.shape[0])

    @property
    def size(self) -> int:
        return int(self.estimates.shape[1])

    def average(self) -> np.ndarray:
        return self.estimates.mean(axis=0)


def dense_inputs(local_inputs: LocalInputs, n_agents: int, size: int) -> np.ndarray:
    """Turn per-agent inputs into an (N, n) array.

    Inputs are either an array already of that shape, or one sparse mapping
    {offset: value} (or None) per agent.

    Raises:
        ShapeMismatchError: If the agent count or an offset does not fit
    """
    if isinstance(local_inputs, np.ndarray):
        arr = np.asarray(local_inputs, dtype=float)
        if arr.shape != (n_agents, size):
            raise ShapeMismatchError(f"Inputs have shape {arr.shape}, expected {(n_agents, size)}")
        return arr
    if len(local_inputs) != n_agents:
        raise ShapeMismatchError(f"Got inputs for {len(local_inputs)} agents, expected {n_agents}")
    arr = np.zeros((n_agents, size))
    for i, sparse in enumerate(local_inputs):
        if not sparse:
            continue
        for offset, value in sparse.items():
            if not 0 <= offset < size:
                raise ShapeMismatchError(f"Input offset {offset} of agent {i} outside 0..{size - 1}")
            arr[i, offset] += value
    return arr


def consensus_term(estimates: np.ndarray, graph: CommGraph) -> np.ndarray:
    """Return sum_{k != i} A[i, k] * (x^k - x^i) for every agent i.

    Agents without neighbors get an exact zero row.
    """
    x = np.asarray(estimates, dtype=float)
    if graph.n_agents != x.shape[0]:
        raise ShapeMismatchError(f"Graph has {graph.n_agents} agents, state has {x.shape[0]}")
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        nbrs = graph.neighbors(i)
        if nbrs:
            out[i] = graph.weights[i, nbrs] @ (x[nbrs] - x[i])
    return out


def track_step(
    ts: TrackerState,
    graph: CommGraph,
    local_inputs: LocalInputs,
    differential: bool = False,
) -> TrackerState:
    """Advance every agent's estimate by one synchronous round.

    Args:
        ts: Current state; left untouched
        graph: This tick's weights
        local_inputs: Per-agent inputs, dense (N, n) or sparse mappings
        differential: Inject ``input - last_input`` instead of ``input``

    Returns:
        The next TrackerState, with ``last_input`` set to this tick's inputs

    Raises:
        ShapeMismatchError: If graph, state and inputs disagree in size
    """
    inputs = dense_inputs(local_inputs, ts.n_agents, ts.size)
    mixed = ts.estimates + consensus_term(ts.estimates, graph)
    if differential:
        mixed = (mixed - ts.last_input) + inputs
    else:
        mixed = mixed + inputs
    return TrackerState(mixed, inputs.copy())


def second_singular_value(graph: CommGraph) -> float:
    """Second-largest singular value of the weights (0 for a single agent)."""
    if graph.n_agents < 2:
        return 0.0
    s = np.linalg.svd(graph.weights, compute_uv=False)
    return float(s[1])


@dataclass
class ErrorBounds:
    """Tracking error bounds of a graph sequence.

    Attributes:
        delta_q: Bound on agent-to-average distance of the Q estimates
        delta_omega: Bound on agent-to-average distance of the gradient estimates
        sigma: Largest second singular value over the sequence
        n_agents: Fleet size
        ticks: Graphs the bound was computed from
        nondegeneracy: Smallest nonzero off-diagonal weight seen (None: no edges)
    """
    delta_q: float
    delta_omega: float
    sigma: float
    n_agents: int
    ticks: int
    nondegeneracy: Optional[float] = None

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.delta_q) and np.isfinite(self.delta_omega))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta_q": self.delta_q if self.finite else "inf",
            "delta_omega": self.delta_omega if self.finite else "inf",
            "sigma": self.sigma,
            "n_agents": self.n_agents,
            "ticks": self.ticks,
            "finite": self.finite,
            "nondegeneracy": self.nondegeneracy,
        }


def error_bounds(graphs: Sequence[CommGraph], r_max: float, dr_max: float) -> ErrorBounds:
    """Evaluate 2 * sqrt(N) * bound / (1 - max_t sigma_2(A(t))) for both trackers.

    Args:
        graphs: Graph sequence, all with the same fleet size
        r_max: Bound on per-tick Q inputs
        dr_max: Bound on per-tick changes of the gradient inputs

    Returns:
        ErrorBounds; both bounds are infinite when some tick has sigma_2 = 1

    Raises:
        ValueError: If the sequence is empty or a bound is negative
    """
    if not graphs:
        raise ValueError("error_bounds needs at least one graph")
    if r_max < 0 or dr_max < 0:
        raise ValueError(f"r_max and dr_max must be nonnegative, got {r_max}, {dr_max}")
    n = graphs[0].n_agents
    if any(g.n_agents != n for g in graphs):
        raise ShapeMismatchError("Graphs in the sequence have different fleet sizes")

    sigma = max(second_singular_value(g) for g in graphs)
    nd_values = [v for v in (g.nondegeneracy() for g in graphs) if v is not None]
    nondegeneracy = min(nd_values) if nd_values else None

    if sigma >= 1.0 - SIGMA_ONE_TOL:
        logger.warning(
            f"Second singular value reaches 1 over {len(graphs)} ticks; "
            "the fleet never mixes and the tracking bounds are infinite"
        )
        delta_q = delta_omega = float("inf")
    else:
        scale = 2.0 * np.sqrt(n) / (1.0 - sigma)
        delta_q = float(scale * r_max)
        delta_omega = float(scale * dr_max)
    return ErrorBounds(delta_q, delta_omega, sigma, n, len(graphs), nondegeneracy)
