"""Task values for the assignment game.

The value of a single ride from pickup cell j to dropoff cell l for an agent
at p is

    h = Q(j, l) + R(j, l) - C * |p - pickup| / u

where R is the expected immediate reward of the demand model and u is the
length in km of one cost unit (GameConfig.cost_unit_km). A pooled pair
serves the nearer pickup first, then the other pickup, then the dropoff
nearest to that second pickup, then the remaining dropoff. Its value is
discounted by how much longer that route is than the shorter direct trip:

    beta = path_min / min(direct lengths) - 1
    h    = exp(-C' * beta) * [Q(k, d2) + R(j, l) + R(j', l') - C * |p - p1| / u]

with k the agent's cell and d2 the last dropoff cell. The null action is
worth 0.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from ..config import GameConfig
from ..demand.geometry import Point, distance
from ..mdp.qtable import QTable
from .tasks import NULL_ACTION, Action, Task

logger = logging.getLogger(__name__)


class UtilityMode(Enum):
    """How agents value tasks."""
    SARSA = "sarsa"        # Q + expected reward - travel cost
    GREEDY = "greedy"      # immediate fare only
    SHORTEST = "shortest"  # closeness of the pickup only


def available_tasks(
    position: Sequence[float],
    tasks: Sequence[Task],
    cfg: GameConfig,
    pooling: Optional[bool] = None,
) -> List[Action]:
    """Actions open to an agent at ``position``.

    Tasks whose pickup is strictly closer than r_c are offered as single
    rides and, with pooling, as every unordered pair. The null action comes
    first, then singles by id, then pairs.
    """
    pooling = cfg.pooling if pooling is None else pooling
    near = sorted(t.id for t in tasks if distance(position, t.pickup_point) < cfg.r_c)
    actions: List[Action] = [NULL_ACTION]
    actions.extend((t,) for t in near)
    if pooling:
        actions.extend(itertools.combinations(near, 2))
    return actions


class PooledRoute(NamedTuple):
    """Serving order and detour of a pooled pair."""
    first: Task
    second: Task
    first_drop: Task
    second_drop: Task
    path_min: float
    beta: float


def pooled_route(position: Sequence[float], a: Task, b: Task) -> PooledRoute:
    """Route an agent through two pickups and two dropoffs.

    The nearer pickup is served first (ties: lower id); the first dropoff is
    the one nearer to the second pickup (ties: the first rider's). ``beta``
    is +inf when either direct trip has zero length.
    """
    first, second = sorted((a, b), key=lambda t: (distance(position, t.pickup_point), t.id))
    first_drop, second_drop = sorted(
        (first, second), key=lambda t: distance(second.pickup_point, t.dropoff_point)
    )
    path_min = (
        distance(position, first.pickup_point)
        + distance(first.pickup_point, second.pickup_point)
        + distance(second.pickup_point, first_drop.dropoff_point)
        + distance(first_drop.dropoff_point, second_drop.dropoff_point)
    )
    shortest = min(a.direct_length, b.direct_length)
    beta = path_min / shortest - 1.0 if shortest > 0 else math.inf
    return PooledRoute(first, second, first_drop, second_drop, path_min, beta)


def pooling_factor(beta: float, c_prime: float) -> float:
    """exp(-C' * beta), 0 for an infinite detour."""
    if math.isinf(beta):
        return 0.0
    return math.exp(-c_prime * beta)


def _q_value(q: QTable, cell: int, dest: int) -> float:
    # Moves missing from a sparse action index carry no learned value
    if (cell, dest) in q.index:
        return q.get(cell, dest)
    return 0.0


def task_value(
    position: Sequence[float],
    action: Action,
    tasks: Mapping[int, Task],
    q: QTable,
    rewards: np.ndarray,
    cfg: GameConfig,
    agent_cell: Optional[int] = None,
) -> float:
    """Value h of an action for an agent using Q values.

    Args:
        position: Agent position in km
        action: Null, single or pooled action
        tasks: Tasks by id
        q: The Q table this agent consults
        rewards: Expected immediate reward per cell pair
        cfg: Game constants
        agent_cell: Agent's cell, needed for pooled actions

    Raises:
        ValueError: For a pooled action without pooling enabled or without agent_cell
    """
    if not action:
        return 0.0
    if len(action) == 1:
        t = tasks[action[0]]
        return (
            _q_value(q, t.pickup_cell, t.dropoff_cell)
            + float(rewards[t.pickup_cell, t.dropoff_cell])
            - cfg.travel_cost(distance(position, t.pickup_point))
        )
    if len(action) != 2 or not cfg.pooling:
        raise ValueError(f"Action {action} needs pooling of at most two rides")
    if agent_cell is None:
        raise ValueError("Pooled actions need the agent's cell")
    a, b = tasks[action[0]], tasks[action[1]]
    route = pooled_route(position, a, b)
    factor = pooling_factor(route.beta, cfg.C_prime)
    if factor == 0.0:
        return 0.0
    inner = (
        _q_value(q, agent_cell, route.second_drop.dropoff_cell)
        + float(rewards[a.pickup_cell, a.dropoff_cell])
        + float(rewards[b.pickup_cell, b.dropoff_cell])
        - cfg.travel_cost(distance(position, route.first.pickup_point))
    )
    return factor * inner


def greedy_value(position: Sequence[float], action: Action, tasks: Mapping[int, Task], cfg: GameConfig) -> float:
    """Immediate fare of an action (pooled fares are detour-discounted)."""
    if not action:
        return 0.0
    fares = sum(tasks[t].fare for t in action)
    if len(action) == 1:
        return fares
    route = pooled_route(position, tasks[action[0]], tasks[action[1]])
    return pooling_factor(route.beta, cfg.C_prime) * fares


def shortest_value(position: Sequence[float], action: Action, tasks: Mapping[int, Task], cfg: GameConfig) -> float:
    """Closeness of the first pickup: r_c minus its distance, positive inside the sensing radius."""
    if not action:
        return 0.0
    if len(action) == 1:
        return cfg.r_c - distance(position, tasks[action[0]].pickup_point)
    route = pooled_route(position, tasks[action[0]], tasks[action[1]])
    return pooling_factor(route.beta, cfg.C_prime) * (cfg.r_c - distance(position, route.first.pickup_point))


@dataclass
class UtilityModel:
    """Values actions for every player of a game.

    Attributes:
        mode: Valuation rule
        cfg: Game constants
        rewards: Expected immediate reward per cell pair (SARSA mode)
        q_for: Q table consulted by a fleet agent id (SARSA mode)
        locate: Cell of a position, for pooled SARSA values
    """
    mode: UtilityMode
    cfg: GameConfig
    rewards: Optional[np.ndarray] = None
    q_for: Optional[Callable[[int], QTable]] = None
    locate: Optional[Callable[[Point], Optional[int]]] = None

    def __post_init__(self) -> None:
        if self.mode == UtilityMode.SARSA and (self.rewards is None or self.q_for is None):
            raise ValueError("SARSA utilities need rewards and a Q table provider")

    def value(self, agent_id: int, position: Point, action: Action, tasks: Mapping[int, Task]) -> float:
        if self.mode == UtilityMode.GREEDY:
            return greedy_value(position, action, tasks, self.cfg)
        if self.mode == UtilityMode.SHORTEST:
            return shortest_value(position, action, tasks, self.cfg)
        assert self.q_for is not None and self.rewards is not None
        cell = self.locate(position) if self.locate is not None and len(action) == 2 else None
        return task_value(position, action, tasks, self.q_for(agent_id), self.rewards, self.cfg, cell)

    def action_values(
        self,
        agent_id: int,
        position: Point,
        actions: Sequence[Action],
        tasks: Mapping[int, Task],
    ) -> Dict[Action, float]:
        """Value every action of one player."""
        return {a: self.value(agent_id, position, a, tasks) for a in actions}
