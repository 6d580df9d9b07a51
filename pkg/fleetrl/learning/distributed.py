"""Distributed SARSA with consensus-tracked Q and gradient estimates.

Each agent keeps its own estimate of the Q table and of the loss gradient
(omega), plus its own adaptive-rate moving averages. Per tick, an agent that
dropped off a customer computes its temporal difference from its own
estimates; both estimates are mixed with the neighbors' over the tick's
communication graph while the observation is injected scaled by N, so the
fleet average evolves exactly like a centralized table fed by every agent.

The fleet's arrays are stacked (one row per agent) and every AgentLearnState
is a set of row views into them, so whole-fleet rounds are single numpy
operations and all reads of a tick happen before any write.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..consensus.graph import CommGraph
from ..consensus.tracking import TrackerState, track_step
from ..exceptions import ShapeMismatchError
from ..mdp.qtable import ActionIndex, QTable
from .adaptive import (
    DEFAULT_G_MIN,
    DEFAULT_ZETA,
    AdaptiveRateState,
    SarsaUpdateEvent,
    loss_gradient,
    update_rate,
)

logger = logging.getLogger(__name__)


@dataclass
class AgentLearnState:
    """One agent's learning state, as views into the fleet arrays.

    Attributes:
        agent_id: Row of the agent in the fleet arrays
        q_hat: Agent's Q estimate
        omega: Agent's gradient estimate
        rates: Agent's moving averages (f_hat, g_hat)
        alpha: Learning rate last computed per pair
        last_local_input: Gradient input injected last tick (already N-scaled)
    """
    agent_id: int
    q_hat: QTable
    omega: np.ndarray
    rates: AdaptiveRateState
    alpha: np.ndarray
    last_local_input: np.ndarray

    @property
    def f_hat(self) -> np.ndarray:
        return self.rates.f

    @property
    def g_hat(self) -> np.ndarray:
        return self.rates.g


class LearnRecord(NamedTuple):
    """Telemetry of one agent's observation in one tick."""
    agent: int
    pair: int
    r: float
    alpha: float
    injected: float
    underflow: bool

    def to_dict(self) -> Dict[str, Any]:
        return dict(self._asdict())


@dataclass
class FleetLearnState:
    """Stacked learning state of the whole fleet.

    Attributes:
        index: Shared state-action layout
        gamma: Discount factor
        q_hat: Shape (N, pairs)
        omega: Shape (N, pairs)
        f_hat: Shape (N, pairs)
        g_hat: Shape (N, pairs)
        alpha: Shape (N, pairs)
        last_local_input: Shape (N, pairs)
        zeta: Moving-average constant
        g_min: Underflow floor for g_hat
    """
    index: ActionIndex
    gamma: float
    q_hat: np.ndarray
    omega: np.ndarray
    f_hat: np.ndarray
    g_hat: np.ndarray
    alpha: np.ndarray
    last_local_input: np.ndarray
    zeta: float = DEFAULT_ZETA
    g_min: float = DEFAULT_G_MIN
    agents: List[AgentLearnState] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        shape = self.q_hat.shape
        if len(shape) != 2 or shape[1] != self.index.size:
            raise ShapeMismatchError(f"q_hat has shape {shape}, expected (N, {self.index.size})")
        for name in ("omega", "f_hat", "g_hat", "alpha", "last_local_input"):
            if getattr(self, name).shape != shape:
                raise ShapeMismatchError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        self.agents = [self._view(i) for i in range(shape[0])]

    @classmethod
    def initial(
        cls,
        q_star: QTable,
        n_agents: int,
        zeta: float = DEFAULT_ZETA,
        g_min: float = DEFAULT_G_MIN,
    ) -> "FleetLearnState":
        """Warm start: every Q_hat is ``q_star``, omega = 0, f_hat = g_hat = 1."""
        shape = (n_agents, q_star.index.size)
        return cls(
            index=q_star.index,
            gamma=q_star.gamma,
            q_hat=np.tile(q_star.values, (n_agents, 1)),
            omega=np.zeros(shape),
            f_hat=np.ones(shape),
            g_hat=np.ones(shape),
            alpha=np.ones(shape),
            last_local_input=np.zeros(shape),
            zeta=zeta,
            g_min=g_min,
        )

    def _view(self, i: int) -> AgentLearnState:
        return AgentLearnState(
            agent_id=i,
            q_hat=QTable(self.index, self.q_hat[i], self.gamma),
            omega=self.omega[i],
            rates=AdaptiveRateState(self.f_hat[i], self.g_hat[i], self.zeta, self.g_min),
            alpha=self.alpha[i],
            last_local_input=self.last_local_input[i],
        )

    @property
    def n_agents(self) -> int:
        return int(self.q_hat.shape[0])

    def average_q(self) -> QTable:
        """Fleet-average Q estimate."""
        return QTable(self.index, self.q_hat.mean(axis=0), self.gamma)


def local_correction(
    agent: AgentLearnState,
    ev: Optional[SarsaUpdateEvent],
    gamma: float,
) -> Tuple[float, Optional[int]]:
    """Temporal difference of an agent's own observation.

    Returns:
        (r, pair): r = R + gamma * Q_hat(j, a') - Q_hat(l, a), and the flat
        pair observed; (0.0, None) when the agent observed nothing
    """
    if ev is None:
        return 0.0, None
    pair = agent.q_hat.index.pair(ev.state, ev.action)
    return -loss_gradient(agent.q_hat, ev, gamma), pair


def fleet_learn_tick(
    fleet: FleetLearnState,
    graph: CommGraph,
    events: Sequence[Optional[SarsaUpdateEvent]],
) -> List[LearnRecord]:
    """Run one synchronous learning round for the whole fleet.

    Order within the round:

    1. every observing agent computes r and its loss gradient at the pair
       from its own Q_hat;
    2. omega is tracked with input N * (gradient now - gradient injected
       last tick);
    3. each observing agent folds its tracked omega at the pair into f_hat
       and g_hat and reads alpha = f_hat^2 / g_hat there;
    4. Q_hat is tracked with input N * alpha * r at the observed pair.

    Several agents observing the same pair in one tick have their inputs
    summed.

    Args:
        fleet: Fleet state, updated in place
        graph: Communication weights for this tick
        events: One entry per agent; None for agents that observed nothing

    Returns:
        One LearnRecord per observing agent, in agent order

    Raises:
        ShapeMismatchError: If events or graph do not match the fleet size
    """
    n = fleet.n_agents
    if len(events) != n:
        raise ShapeMismatchError(f"Got {len(events)} events for {n} agents")
    if graph.n_agents != n:
        raise ShapeMismatchError(f"Graph has {graph.n_agents} agents, fleet has {n}")

    observed: List[Tuple[int, int, float]] = []
    grad_inputs = np.zeros_like(fleet.omega)
    for agent, ev in zip(fleet.agents, events):
        r, pair = local_correction(agent, ev, fleet.gamma)
        if pair is None:
            continue
        observed.append((agent.agent_id, pair, r))
        grad_inputs[agent.agent_id, pair] += n * -r

    omega_next = track_step(
        TrackerState(fleet.omega, fleet.last_local_input), graph, grad_inputs, differential=True
    )
    fleet.omega[...] = omega_next.estimates
    fleet.last_local_input[...] = omega_next.last_input

    records = []
    q_inputs = np.zeros_like(fleet.q_hat)
    for i, pair, r in observed:
        agent = fleet.agents[i]
        rate = update_rate(agent.rates, pair, float(agent.omega[pair]), 1)
        agent.alpha[pair] = rate.alpha
        injected = n * rate.alpha * r
        q_inputs[i, pair] += injected
        records.append(LearnRecord(i, pair, r, rate.alpha, injected, rate.underflow))

    q_next = track_step(TrackerState(fleet.q_hat, np.zeros_like(fleet.q_hat)), graph, q_inputs)
    fleet.q_hat[...] = q_next.estimates

    if records:
        logger.debug(f"Learning round: {len(records)} observation(s) over {n} agents")
    return records


def disagreement(agents: Union[FleetLearnState, Sequence[AgentLearnState], np.ndarray]) -> float:
    """Largest max-norm distance between any two agents' Q estimates."""
    if isinstance(agents, FleetLearnState):
        stacked = agents.q_hat
    elif isinstance(agents, np.ndarray):
        stacked = agents
    else:
        if not agents:
            return 0.0
        stacked = np.stack([a.q_hat.values for a in agents])
    if stacked.shape[0] == 0 or stacked.shape[1] == 0:
        return 0.0
    return float(np.max(stacked.max(axis=0) - stacked.min(axis=0)))
