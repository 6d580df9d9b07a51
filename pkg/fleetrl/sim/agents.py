"""Simulated vehicles and their routes.

An agent moves in straight lines at constant speed. The approach to a
pickup takes distance / speed ticks; a single ride then takes the trip's own
duration. A pooled pair follows its shortest serving order with every leg
at distance / speed. Stops fall at fractional times; an agent reaches a stop
in the first tick at or after that time.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

from ..demand.geometry import Point, distance
from ..game.tasks import Task
from ..game.utility import pooled_route

logger = logging.getLogger(__name__)

# Float slack when comparing stop times with tick boundaries
TIME_EPS = 1e-9


class AgentStatus(Enum):
    """Where an agent is in its job."""
    IDLE = "idle"
    TO_PICKUP = "to-pickup"
    CARRYING = "carrying"


class Stop(NamedTuple):
    """A pickup or drop-off on an agent's route."""
    kind: str  # "pickup" or "dropoff"
    task: Task
    point: Point
    time: float


class Delivery(NamedTuple):
    """A completed drop-off.

    Attributes:
        agent: Agent id
        task: Task delivered
        tick: Tick the drop-off was reached
        assigned_tick: Tick the job was committed
        pooled: True if the ride was part of a pooled pair
        next_dropoff_cell: Dropoff cell of the next drop-off still on the
            route, None if this drop-off ended the job
    """
    agent: int
    task: Task
    tick: int
    assigned_tick: int
    pooled: bool
    next_dropoff_cell: Optional[int]

    @property
    def final(self) -> bool:
        return self.next_dropoff_cell is None


def _tick_of(time: float) -> int:
    return int(math.ceil(time - TIME_EPS))


def plan_route(position: Point, tasks: Sequence[Task], start: float, speed: float) -> List[Stop]:
    """Timed stops for one job starting at ``start``.

    Raises:
        ValueError: For an empty job, more than two tasks or nonpositive speed
    """
    if speed <= 0:
        raise ValueError(f"speed must be positive, got {speed}")
    if len(tasks) == 1:
        task = tasks[0]
        t_pick = start + distance(position, task.pickup_point) / speed
        return [
            Stop("pickup", task, task.pickup_point, t_pick),
            Stop("dropoff", task, task.dropoff_point, t_pick + task.duration),
        ]
    if len(tasks) != 2:
        raise ValueError(f"A job holds one or two tasks, got {len(tasks)}")

    route = pooled_route(position, tasks[0], tasks[1])
    order = [
        ("pickup", route.first, route.first.pickup_point),
        ("pickup", route.second, route.second.pickup_point),
        ("dropoff", route.first_drop, route.first_drop.dropoff_point),
        ("dropoff", route.second_drop, route.second_drop.dropoff_point),
    ]
    stops = []
    here, clock = position, start
    for kind, task, point in order:
        clock += distance(here, point) / speed
        stops.append(Stop(kind, task, point, clock))
        here = point
    return stops


@dataclass
class SimAgent:
    """One vehicle of the fleet.

    Status moves idle -> to-pickup -> carrying -> idle. Only idle agents
    take part in the assignment game.

    Attributes:
        id: Fleet index
        position: Current position in km
        status: Job phase
        tasks: Tasks of the current job
        busy_until: Tick at which the current job ends
        assigned_tick: Tick the current job was committed
        route: Stops still ahead
    """
    id: int
    position: Point
    status: AgentStatus = AgentStatus.IDLE
    tasks: Tuple[Task, ...] = ()
    busy_until: int = 0
    assigned_tick: int = 0
    route: List[Stop] = field(default_factory=list)
    _leg_origin: Tuple[Point, float] = field(default=((0.0, 0.0), 0.0), repr=False)

    def __post_init__(self) -> None:
        self.position = (float(self.position[0]), float(self.position[1]))

    @property
    def idle(self) -> bool:
        return self.status == AgentStatus.IDLE

    @property
    def pooled(self) -> bool:
        return len(self.tasks) == 2

    def assign(self, tasks: Sequence[Task], tick: int, speed: float) -> None:
        """Commit a job at ``tick``.

        Raises:
            RuntimeError: If the agent is busy
        """
        if not self.idle:
            raise RuntimeError(f"Agent {self.id} is {self.status.value} and cannot take a new job")
        self.route = plan_route(self.position, tasks, float(tick), speed)
        self.tasks = tuple(tasks)
        self.status = AgentStatus.TO_PICKUP
        self.assigned_tick = tick
        self.busy_until = _tick_of(self.route[-1].time)
        self._leg_origin = (self.position, float(tick))

    def advance(self, tick: int) -> List[Delivery]:
        """Move to where the route puts the agent at ``tick``.

        Returns:
            Drop-offs reached, in route order
        """
        deliveries = []
        while self.route and self.route[0].time <= tick + TIME_EPS:
            stop = self.route.pop(0)
            self._leg_origin = (stop.point, stop.time)
            if stop.kind == "pickup":
                self.status = AgentStatus.CARRYING
                continue
            upcoming = next((s for s in self.route if s.kind == "dropoff"), None)
            deliveries.append(
                Delivery(
                    agent=self.id,
                    task=stop.task,
                    tick=tick,
                    assigned_tick=self.assigned_tick,
                    pooled=self.pooled,
                    next_dropoff_cell=upcoming.task.dropoff_cell if upcoming else None,
                )
            )

        if not self.route:
            if self.status != AgentStatus.IDLE:
                self.position = self._leg_origin[0]
                self.status = AgentStatus.IDLE
                self.tasks = ()
            return deliveries

        (x0, y0), t0 = self._leg_origin
        nxt = self.route[0]
        span = nxt.time - t0
        frac = (tick - t0) / span if span > 0 else 1.0
        frac = min(max(frac, 0.0), 1.0)
        self.position = (x0 + frac * (nxt.point[0] - x0), y0 + frac * (nxt.point[1] - y0))
        return deliveries
