"""Pickup-and-delivery tasks and the actions built from them.

An action is a sorted tuple of task ids: ``()`` is the null action, a
1-tuple a single ride and a 2-tuple a pooled pair. A profile holds one
action per player.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import GameConfig
from ..demand.geometry import GridGeometry, Point, distance
from ..demand.trips import TripRecord
from ..utils.hashing import canonical_json

Action = Tuple[int, ...]
Profile = Tuple[Action, ...]

NULL_ACTION: Action = ()

INSTANCE_KIND = "game-instance"


def make_action(*task_ids: int) -> Action:
    """Canonical action for a set of task ids."""
    return tuple(sorted(int(t) for t in task_ids))


def null_profile(n_players: int) -> Profile:
    return tuple(NULL_ACTION for _ in range(n_players))


@dataclass(frozen=True)
class Task:
    """A customer request.

    Attributes:
        id: Unique id
        pickup_point: Pickup position in km
        dropoff_point: Dropoff position in km
        pickup_cell: Cell of the pickup point
        dropoff_cell: Cell of the dropoff point
        fare: Fare paid on delivery
        duration: In-vehicle time in ticks
        created: Tick the request appeared
    """
    id: int
    pickup_point: Point
    dropoff_point: Point
    pickup_cell: int
    dropoff_cell: int
    fare: float
    duration: float = 1.0
    created: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "pickup_point", (float(self.pickup_point[0]), float(self.pickup_point[1])))
        object.__setattr__(self, "dropoff_point", (float(self.dropoff_point[0]), float(self.dropoff_point[1])))
        if self.pickup_cell < 0 or self.dropoff_cell < 0:
            raise ValueError(f"Task {self.id} has a negative cell id")
        if self.fare < 0:
            raise ValueError(f"Task {self.id} has negative fare {self.fare}")
        if self.duration <= 0:
            raise ValueError(f"Task {self.id} has nonpositive duration {self.duration}")

    @property
    def direct_length(self) -> float:
        """Straight-line pickup-to-dropoff distance in km."""
        return distance(self.pickup_point, self.dropoff_point)

    @classmethod
    def from_trip(
        cls,
        task_id: int,
        trip: TripRecord,
        geometry: GridGeometry,
        rng: Optional[np.random.Generator] = None,
    ) -> "Task":
        """Turn a trip record into a task.

        Points recorded on the trip are kept; otherwise a point is drawn
        inside the cell with ``rng``, or the centroid is used without one.
        """
        def place(point: Optional[Point], cell: int) -> Point:
            if point is not None:
                return point
            if rng is not None:
                return geometry.sample_point(cell, rng)
            return geometry.centroid(cell)

        return cls(
            id=task_id,
            pickup_point=place(trip.pickup_point, trip.pickup),
            dropoff_point=place(trip.dropoff_point, trip.dropoff),
            pickup_cell=trip.pickup,
            dropoff_cell=trip.dropoff,
            fare=trip.fare,
            duration=trip.duration,
            created=trip.start_time,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "pickup_point": list(self.pickup_point),
            "dropoff_point": list(self.dropoff_point),
            "pickup_cell": self.pickup_cell,
            "dropoff_cell": self.dropoff_cell,
            "fare": self.fare,
            "duration": self.duration,
            "created": self.created,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Task":
        return cls(
            id=int(data["id"]),
            pickup_point=tuple(data["pickup_point"]),  # type: ignore[arg-type]
            dropoff_point=tuple(data["dropoff_point"]),  # type: ignore[arg-type]
            pickup_cell=int(data["pickup_cell"]),
            dropoff_cell=int(data["dropoff_cell"]),
            fare=float(data["fare"]),
            duration=float(data.get("duration", 1.0)),
            created=int(data.get("created", 0)),
        )


def save_instance(
    path: Union[str, Path],
    positions: Sequence[Point],
    tasks: Sequence[Task],
    cfg: GameConfig,
) -> Path:
    """Write a game instance (agent positions, tasks, game config) as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "kind": INSTANCE_KIND,
        "positions": [[float(p[0]), float(p[1])] for p in positions],
        "tasks": [t.to_dict() for t in tasks],
        "game": cfg.to_dict(),
    }
    path.write_text(canonical_json(payload), encoding="utf-8")
    return path


def load_instance(path: Union[str, Path]) -> Tuple[List[Point], List[Task], GameConfig]:
    """Read a game instance written by ``save_instance``.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the file is not a game instance
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Game instance not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("kind") != INSTANCE_KIND:
        raise ValueError(f"{path} is not a game instance (kind={data.get('kind')!r})")
    positions = [(float(p[0]), float(p[1])) for p in data["positions"]]
    tasks = [Task.from_dict(t) for t in data["tasks"]]
    return positions, tasks, GameConfig.from_dict(data.get("game", {}))
