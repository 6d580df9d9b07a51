"""Dispatch policies driven by the simulator.

Each policy decides how agents value tasks in the assignment game and how
(or whether) their Q tables learn from completed rides:

    - DistributedSarsaPolicy: one Q estimate per agent, consensus learning
    - CentralizedSarsaPolicy: one shared Q table, adaptive-rate SARSA
    - MdpStaticPolicy: the warm-start Q table, never updated
    - GreedyPolicy: immediate fare only
    - ShortestPathPolicy: closeness of the pickup only

Usage:
    from fleetrl.sim.policies import get_policy

    policy = get_policy(Policy.DISTRIBUTED_SARSA, q_star, n_agents=10, learning=cfg.learning)
    utility = policy.utility_model(cfg.game, rewards, geometry.locate)
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..config import GameConfig, LearningConfig, Policy
from ..consensus.graph import CommGraph
from ..demand.geometry import Point
from ..game.utility import UtilityMode, UtilityModel
from ..learning.adaptive import CentralizedLearner, SarsaUpdateEvent
from ..learning.distributed import FleetLearnState, LearnRecord, disagreement, fleet_learn_tick
from ..mdp.qtable import QTable

# Agent column used for tables shared by the whole fleet
SHARED_AGENT = -1

Events = Sequence[Optional[SarsaUpdateEvent]]


class DispatchPolicy(ABC):
    """Abstract base class for dispatch policies.

    Args:
        warm_start: Q table every agent starts from
        n_agents: Fleet size
        learning: Learning constants (zeta, g_min)
    """

    policy: Policy
    utility_mode: UtilityMode = UtilityMode.SARSA

    def __init__(self, warm_start: QTable, n_agents: int, learning: LearningConfig):
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")
        self.warm_start = warm_start
        self.n_agents = n_agents
        self.learning = learning

    @property
    def learns(self) -> bool:
        """True if ``learn`` changes any Q table."""
        return False

    @abstractmethod
    def q_for(self, agent_id: int) -> QTable:
        """Q table an agent consults when valuing tasks."""

    def learn(self, events: Events, graph: CommGraph) -> List[LearnRecord]:
        """Run one learning round.

        Args:
            events: One entry per agent, None where nothing was observed
            graph: Communication weights of this tick

        Returns:
            One record per observing agent, in agent order
        """
        return []

    def disagreement(self) -> float:
        """Largest gap between agents' Q estimates."""
        return 0.0

    def tracked_values(self, pair: int) -> List[Tuple[int, float]]:
        """(agent, Q value) rows for one flat pair."""
        return [(SHARED_AGENT, float(self.q_for(0).values[pair]))]

    def final_q(self) -> QTable:
        """Q table summarizing the policy at the end of a run."""
        return self.q_for(0)

    def utility_model(
        self,
        cfg: GameConfig,
        rewards: np.ndarray,
        locate: Callable[[Point], Optional[int]],
    ) -> UtilityModel:
        """Valuation used by every player of this policy's games."""
        return UtilityModel(self.utility_mode, cfg, rewards, self.q_for, locate)


class DistributedSarsaPolicy(DispatchPolicy):
    """Per-agent Q estimates kept close by neighbor averaging."""

    policy = Policy.DISTRIBUTED_SARSA

    def __init__(self, warm_start: QTable, n_agents: int, learning: LearningConfig):
        super().__init__(warm_start, n_agents, learning)
        self.fleet = FleetLearnState.initial(warm_start, n_agents, learning.zeta, learning.g_min)

    @property
    def learns(self) -> bool:
        return True

    def q_for(self, agent_id: int) -> QTable:
        return self.fleet.agents[agent_id].q_hat

    def learn(self, events: Events, graph: CommGraph) -> List[LearnRecord]:
        return fleet_learn_tick(self.fleet, graph, events)

    def disagreement(self) -> float:
        return disagreement(self.fleet)

    def tracked_values(self, pair: int) -> List[Tuple[int, float]]:
        return [(i, float(self.fleet.q_hat[i, pair])) for i in range(self.n_agents)]

    def final_q(self) -> QTable:
        return self.fleet.average_q()


class CentralizedSarsaPolicy(DispatchPolicy):
    """One Q table updated by every agent's rides, in agent order."""

    policy = Policy.CENTRALIZED_SARSA

    def __init__(self, warm_start: QTable, n_agents: int, learning: LearningConfig):
        super().__init__(warm_start, n_agents, learning)
        self.learner = CentralizedLearner(warm_start, warm_start.gamma, learning.zeta, learning.g_min)

    @property
    def learns(self) -> bool:
        return True

    def q_for(self, agent_id: int) -> QTable:
        return self.learner.q

    def learn(self, events: Events, graph: CommGraph) -> List[LearnRecord]:
        records = []
        for agent, ev in enumerate(events):
            if ev is None:
                continue
            step = self.learner.observe(ev)
            r = -step.gradient
            records.append(LearnRecord(agent, step.pair, r, step.alpha, step.alpha * r, step.underflow))
        return records


class MdpStaticPolicy(DispatchPolicy):
    """Values tasks with the warm-start table and never learns."""

    policy = Policy.MDP_STATIC

    def q_for(self, agent_id: int) -> QTable:
        return self.warm_start


class GreedyPolicy(MdpStaticPolicy):
    """Takes the highest immediate fare."""

    policy = Policy.GREEDY
    utility_mode = UtilityMode.GREEDY


class ShortestPathPolicy(MdpStaticPolicy):
    """Takes the closest pickup."""

    policy = Policy.SHORTEST_PATH
    utility_mode = UtilityMode.SHORTEST


def get_policy(
    policy: Policy,
    warm_start: QTable,
    n_agents: int,
    learning: Optional[LearningConfig] = None,
) -> DispatchPolicy:
    """Build the dispatch policy named by ``policy``.

    Args:
        policy: Policy to build (enum member or its string value)
        warm_start: Q table agents start from
        n_agents: Fleet size
        learning: Learning constants (defaults when omitted)

    Returns:
        DispatchPolicy instance

    Raises:
        NotImplementedError: If the policy is not supported
    """
    learning = learning or LearningConfig()
    try:
        policy = Policy(policy)
    except ValueError:
        pass

    registry = {
        Policy.DISTRIBUTED_SARSA: DistributedSarsaPolicy,
        Policy.CENTRALIZED_SARSA: CentralizedSarsaPolicy,
        Policy.MDP_STATIC: MdpStaticPolicy,
        Policy.GREEDY: GreedyPolicy,
        Policy.SHORTEST_PATH: ShortestPathPolicy,
    }
    cls = registry.get(policy)  # type: ignore[call-overload]
    if cls is None:
        raise NotImplementedError(
            f"Policy '{policy}' is not supported. "
            f"Supported policies: {', '.join(p.value for p in registry)}"
        )
    return cls(warm_start, n_agents, learning)
