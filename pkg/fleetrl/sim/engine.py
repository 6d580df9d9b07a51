"""Tick loop of the fleet simulator.

Each tick runs, in order:

1. agents advance along their routes; reached drop-offs pay their fare
2. the demand source spawns this tick's requests
3. requests older than the time-to-live expire
4. idle agents play the assignment game over the open requests
5. drop-offs become SARSA events (a final drop-off takes the agent's next
   chosen destination as its successor action) and the policy learns over
   this tick's communication graph
6. metrics are recorded

Agents only move when assigned. Once the demand source is exhausted the run
continues until every agent is idle and no request is open, then stops and
is flagged as ended early.

Example:
    from fleetrl.config import SimConfig
    from fleetrl.sim import FleetSimulator

    metrics = FleetSimulator(SimConfig(n_agents=10, horizon=500, seed=3)).run()
    print(metrics.total_revenue)
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import DemandKind, Policy, SimConfig
from ..consensus.graph import CommGraph, build_graph
from ..demand.estimate import DemandModel, estimate_demand
from ..demand.geometry import GridGeometry, Point
from ..demand.synthetic import TripStream, synth_demand
from ..demand.trips import RecordedTripStream, TripRecord, ingest_trips
from ..exceptions import ConfigError, ShapeMismatchError
from ..game.dynamics import build_game, run_assignment
from ..game.tasks import Task
from ..learning.adaptive import SarsaUpdateEvent
from ..learning.distributed import LearnRecord
from ..mdp.model import MdpModel, build_mdp
from ..mdp.qtable import QTable
from ..mdp.solver import solve_mpi
from .agents import Delivery, SimAgent
from .metrics import RunMetrics, run_dir_name
from .policies import DispatchPolicy, get_policy

logger = logging.getLogger(__name__)

DemandStream = Union[TripStream, RecordedTripStream]

# Policies whose utilities never read Q values
_Q_FREE_POLICIES = (Policy.GREEDY, Policy.SHORTEST_PATH)


@dataclass
class DemandSetup:
    """Demand model, request stream and grid of a run."""
    model: DemandModel
    stream: DemandStream
    geometry: GridGeometry


def prepare_demand(cfg: SimConfig) -> DemandSetup:
    """Build the demand model and request stream a config asks for.

    Synthetic sources use the scenario's true model and a stream seeded with
    the run seed. File sources replay the trips and either load the given
    model or estimate one from the same trips.

    Raises:
        IngestError: If the trip file cannot be read
        ShapeMismatchError: If a loaded model does not match the grid
    """
    source = cfg.demand
    if source.kind == DemandKind.SYNTHETIC:
        model, stream = synth_demand(source.scenario, cfg.seed)
        return DemandSetup(model, stream, stream.geometry)

    geometry = GridGeometry.from_config(source.grid)
    assert source.trips is not None
    ingested = ingest_trips(source.trips, geometry)
    if source.model is not None:
        model = DemandModel.load(source.model)
        if model.n_q != geometry.n_q:
            raise ShapeMismatchError(f"Demand model has {model.n_q} cells, grid has {geometry.n_q}")
    else:
        model = estimate_demand(ingested.records, geometry.n_q, window=source.window)
    return DemandSetup(model, RecordedTripStream(ingested.records), geometry)


class FleetSimulator:
    """Runs one simulation.

    Args:
        cfg: Run configuration
        demand: Demand setup (built from ``cfg`` when omitted)
        warm_start: Q table agents start from (``cfg.warm_start`` or an MDP
            solve when omitted)
        positions: Initial agent positions in km (uniform over the map when omitted)

    Raises:
        ConfigError: If a tracked pair is not a state-action pair of the model
        ShapeMismatchError: If the warm start or positions do not fit the run
    """

    def __init__(
        self,
        cfg: SimConfig,
        demand: Optional[DemandSetup] = None,
        warm_start: Optional[QTable] = None,
        positions: Optional[Sequence[Point]] = None,
    ):
        self.cfg = cfg
        self.demand = demand or prepare_demand(cfg)
        self.geometry = self.demand.geometry

        mdp = build_mdp(self.demand.model, cfg.learning.gamma, cfg.learning.sparse_actions)
        self.rewards = mdp.R_bar
        if warm_start is None:
            warm_start = self._warm_start(mdp)
        if warm_start.n_q != self.geometry.n_q:
            raise ShapeMismatchError(f"Warm start has {warm_start.n_q} cells, grid has {self.geometry.n_q}")
        self.index = warm_start.index

        self.policy: DispatchPolicy = get_policy(cfg.policy, warm_start, cfg.n_agents, cfg.learning)
        self.utility = self.policy.utility_model(cfg.game, self.rewards, self.geometry.locate)

        place_seq, game_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        self._place_rng = np.random.default_rng(place_seq)
        self._game_rng = np.random.default_rng(game_seq)

        if positions is None:
            positions = [
                (
                    float(self._place_rng.random() * self.geometry.width_km),
                    float(self._place_rng.random() * self.geometry.height_km),
                )
                for _ in range(cfg.n_agents)
            ]
        if len(positions) != cfg.n_agents:
            raise ShapeMismatchError(f"Got {len(positions)} positions for {cfg.n_agents} agents")
        self.agents = [SimAgent(i, p) for i, p in enumerate(positions)]

        self._tracked: List[Tuple[int, int, int]] = []
        for cell, dest in cfg.tracked_pairs:
            if (cell, dest) not in self.index:
                raise ConfigError(f"Tracked pair ({cell}, {dest}) is not a state-action pair")
            self._tracked.append((cell, dest, self.index.pair(cell, dest)))

        self.open_tasks: Dict[int, Task] = {}
        self._next_task_id = 0
        self._awaiting: Dict[int, Tuple[int, int, float]] = {}
        self._ready: Dict[int, Deque[SarsaUpdateEvent]] = {i: deque() for i in range(cfg.n_agents)}
        self.metrics = RunMetrics(
            run_id=run_dir_name(cfg),
            policy=cfg.policy.value,
            seed=cfg.seed,
            n_agents=cfg.n_agents,
            horizon=cfg.horizon,
        )

    def _warm_start(self, mdp: MdpModel) -> QTable:
        cfg = self.cfg
        if cfg.warm_start is not None:
            q = QTable.load(cfg.warm_start)
            if q.index != mdp.index:
                raise ShapeMismatchError(f"Warm start {cfg.warm_start} does not match the model's action sets")
            return q
        if cfg.policy in _Q_FREE_POLICIES:
            return QTable.filled(mdp.index, 0.0, mdp.gamma)
        learning = cfg.learning
        q, _ = solve_mpi(mdp, learning.eval_sweeps, learning.tol, learning.max_iterations)
        return q

    def run(self) -> RunMetrics:
        """Simulate up to the horizon.

        Returns:
            RunMetrics of the run
        """
        cfg = self.cfg
        exhausted = False
        revenue = 0.0
        for tick in range(cfg.horizon):
            revenue += self._advance(tick)

            if not exhausted:
                batch = self.demand.stream.next_window()
                if batch is None:
                    exhausted = True
                    logger.info(f"Demand source exhausted at tick {tick}; finishing open jobs")
                else:
                    self._spawn(batch)
            self._expire(tick)

            chosen = self._assign(tick)
            events = self._events(chosen)
            graph = build_graph([a.position for a in self.agents], cfg.game.comm_radius)
            records = self.policy.learn(events, graph) if self.policy.learns and self.agents else []

            self._record(tick, revenue, graph, records)
            if exhausted and self._drained():
                self.metrics.ended_early = tick + 1 < cfg.horizon
                break

        m = self.metrics
        logger.info(
            f"Run {m.run_id} ({m.policy}): {m.ticks} ticks, revenue {m.total_revenue:.2f} "
            f"over {len(m.trips)} trips, {m.expired} requests expired"
        )
        return m

    def _advance(self, tick: int) -> float:
        earned = 0.0
        for agent in self.agents:
            for d in agent.advance(tick):
                earned += d.task.fare
                self._deliver(d)
        return earned

    def _deliver(self, d: Delivery) -> None:
        task = d.task
        self.metrics.trips.append(
            {
                "tick": d.tick,
                "agent": d.agent,
                "task": task.id,
                "pickup_cell": task.pickup_cell,
                "dropoff_cell": task.dropoff_cell,
                "fare": task.fare,
                "pooled": d.pooled,
                "wait": d.assigned_tick - task.created,
                "ride_ticks": d.tick - d.assigned_tick,
            }
        )
        if (task.pickup_cell, task.dropoff_cell) not in self.index:
            return
        motion = float(self.demand.model.M[task.pickup_cell, task.dropoff_cell])
        reward = motion * task.fare / task.duration
        if d.final:
            self._awaiting[d.agent] = (task.pickup_cell, task.dropoff_cell, reward)
        else:
            self._queue(d.agent, task.pickup_cell, task.dropoff_cell, reward, d.next_dropoff_cell)

    def _queue(self, agent: int, state: int, action: int, reward: float, next_action: Optional[int]) -> None:
        if next_action is not None and (action, next_action) not in self.index:
            next_action = None
        self._ready[agent].append(SarsaUpdateEvent(state, action, action, next_action, reward))

    def _spawn(self, batch: List[TripRecord]) -> None:
        for trip in batch:
            task = Task.from_trip(self._next_task_id, trip, self.geometry, self._place_rng)
            self.open_tasks[task.id] = task
            self._next_task_id += 1
        self.metrics.requests += len(batch)

    def _expire(self, tick: int) -> None:
        stale = [tid for tid, t in self.open_tasks.items() if tick - t.created >= self.cfg.request_ttl]
        for tid in stale:
            del self.open_tasks[tid]
        self.metrics.expired += len(stale)

    def _assign(self, tick: int) -> Dict[int, Tuple[Task, ...]]:
        idle = [a for a in self.agents if a.idle]
        if not idle or not self.open_tasks:
            return {}
        tasks = [self.open_tasks[tid] for tid in sorted(self.open_tasks)]
        game = build_game(
            [a.position for a in idle], tasks, self.cfg.game, self.utility, [a.id for a in idle]
        )
        result = run_assignment(game, self.cfg.game, self.cfg.stop, rng=self._game_rng)

        chosen: Dict[int, Tuple[Task, ...]] = {}
        for agent_id, action in result.assignments().items():
            job = tuple(self.open_tasks.pop(tid) for tid in action)
            self.agents[agent_id].assign(job, tick, self.cfg.speed)
            chosen[agent_id] = job
        self.metrics.potential.append(
            {
                "tick": tick,
                "players": game.n_players,
                "tasks": len(tasks),
                "rounds": result.rounds,
                "converged": result.converged,
                "potential": result.potential,
                "assigned": len(chosen),
            }
        )
        return chosen

    def _events(self, chosen: Dict[int, Tuple[Task, ...]]) -> List[Optional[SarsaUpdateEvent]]:
        """Close pending final deliveries into SARSA events, at most one per agent.

        The successor state is the cell of the final dropoff. The successor
        action is the last dropoff cell of the job the agent was given this
        tick, even when that job's pickup lies in another cell, so the
        bootstrap reads Q(successor, new dropoff). An agent not reassigned
        this tick gets no successor action and the update bootstraps from
        the best value of the successor cell instead.
        """
        for agent_id, (state, action, reward) in sorted(self._awaiting.items()):
            next_action = None
            if agent_id in chosen:
                next_action = self.agents[agent_id].route[-1].task.dropoff_cell
            self._queue(agent_id, state, action, reward, next_action)
        self._awaiting.clear()
        return [self._ready[a.id].popleft() if self._ready[a.id] else None for a in self.agents]

    def _record(self, tick: int, revenue: float, graph: CommGraph, records: Sequence[LearnRecord]) -> None:
        m = self.metrics
        m.ticks = tick + 1
        m.revenue.append(revenue)
        m.disagreement.append(self.policy.disagreement())
        for rec in records:
            m.telemetry.append({"tick": tick, **rec.to_dict()})
        if tick % self.cfg.snapshot_every == 0:
            for cell, dest, pair in self._tracked:
                for agent, value in self.policy.tracked_values(pair):
                    m.q_trace.append({"tick": tick, "cell": cell, "dest": dest, "agent": agent, "value": value})
        if self.cfg.record_graphs:
            m.graphs.append(graph)
        if tick % 100 == 0:
            logger.debug(f"Tick {tick}: revenue {revenue:.2f}, {len(self.open_tasks)} open requests")

    def _drained(self) -> bool:
        return (
            not self.open_tasks
            and all(a.idle for a in self.agents)
            and not any(self._ready.values())
        )


def run(cfg: SimConfig) -> RunMetrics:
    """Build a simulator for ``cfg`` and run it."""
    return FleetSimulator(cfg).run()
