"""Flat state-action value tables.

Actions are moves to destination cells. The flat layout is cell-major with
destinations ascending inside each cell, so the action a^l_j of cell l sits at
``offset(l) + rank of j in A(l)``. Every learner in the package shares one
ActionIndex and stores its per-pair vectors (Q, f, g, omega) in that layout.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ModelError, ShapeMismatchError
from ..utils.hashing import canonical_json

QTABLE_VERSION = 1


class ActionIndex:
    """Bijection between (cell, destination) pairs and flat offsets.

    Args:
        actions: For every cell, the destination cells it may move to
    """

    def __init__(self, actions: Sequence[Sequence[int]]):
        n_q = len(actions)
        if n_q < 1:
            raise ModelError("An action index needs at least one cell")
        normalized = []
        for cell, dests in enumerate(actions):
            unique = tuple(sorted({int(d) for d in dests}))
            if not unique:
                raise ModelError(f"Cell {cell} has no actions")
            if unique[0] < 0 or unique[-1] >= n_q:
                raise ModelError(f"Cell {cell} has a destination outside 0..{n_q - 1}")
            normalized.append(unique)
        self.actions: Tuple[Tuple[int, ...], ...] = tuple(normalized)
        self.n_q = n_q
        sizes = [len(a) for a in self.actions]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.size = int(self.offsets[-1])
        self.cells = np.repeat(np.arange(n_q), sizes)
        self.dests = np.fromiter((d for a in self.actions for d in a), dtype=int, count=self.size)
        self._lookup: Dict[Tuple[int, int], int] = {
            (int(c), int(d)): k for k, (c, d) in enumerate(zip(self.cells, self.dests))
        }

    @classmethod
    def dense(cls, n_q: int) -> "ActionIndex":
        """Every cell may move to every cell, itself included."""
        return cls([range(n_q)] * n_q)

    def pair(self, cell: int, dest: int) -> int:
        """Return the flat offset of moving from ``cell`` to ``dest``.

        Raises:
            IndexError: If the move is not in A(cell)
        """
        try:
            return self._lookup[(int(cell), int(dest))]
        except KeyError:
            raise IndexError(f"Action {cell}->{dest} is not in the action index") from None

    def __contains__(self, key: Tuple[int, int]) -> bool:
        return (int(key[0]), int(key[1])) in self._lookup

    def cell_slice(self, cell: int) -> slice:
        """Flat range holding A(cell)."""
        return slice(int(self.offsets[cell]), int(self.offsets[cell + 1]))

    def pairs(self) -> Iterator[Tuple[int, int]]:
        """Iterate (cell, destination) in flat order."""
        return ((int(c), int(d)) for c, d in zip(self.cells, self.dests))

    def to_list(self) -> List[List[int]]:
        """Return [cell, destination, offset] triples in flat order."""
        return [[c, d, k] for k, (c, d) in enumerate(self.pairs())]

    @classmethod
    def from_list(cls, triples: Sequence[Sequence[int]], n_q: int) -> "ActionIndex":
        """Rebuild from ``to_list`` output, checking offsets.

        Raises:
            ModelError: If the triples are not the canonical layout
        """
        actions: List[List[int]] = [[] for _ in range(n_q)]
        for cell, dest, _ in triples:
            if not 0 <= cell < n_q:
                raise ModelError(f"index_map cell {cell} is outside 0..{n_q - 1}")
            actions[cell].append(dest)
        index = cls(actions)
        if index.to_list() != [list(map(int, t)) for t in triples]:
            raise ModelError("index_map is not in cell-major, destination-ascending order")
        return index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ActionIndex) and self.actions == other.actions

    def __hash__(self) -> int:
        return hash(self.actions)

    def __repr__(self) -> str:
        return f"ActionIndex(n_q={self.n_q}, size={self.size})"


@dataclass
class QTable:
    """Q values over an ActionIndex.

    Attributes:
        index: Shared state-action layout
        values: Flat Q vector, one entry per pair
        gamma: Discount the values were computed under
    """
    index: ActionIndex
    values: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.index.size,):
            raise ShapeMismatchError(
                f"Q vector has shape {self.values.shape}, index needs ({self.index.size},)"
            )

    @classmethod
    def filled(cls, index: ActionIndex, value: float, gamma: float) -> "QTable":
        return cls(index, np.full(index.size, float(value)), gamma)

    @property
    def n_q(self) -> int:
        return self.index.n_q

    def get(self, cell: int, dest: int) -> float:
        return float(self.values[self.index.pair(cell, dest)])

    def cell_values(self, cell: int) -> np.ndarray:
        """Q values of A(cell), destinations ascending (a view)."""
        return self.values[self.index.cell_slice(cell)]

    def best_action(self, cell: int) -> int:
        """Destination with the largest Q; ties go to the smallest destination."""
        k = int(np.argmax(self.cell_values(cell)))
        return self.index.actions[cell][k]

    def best_value(self, cell: int) -> float:
        return float(np.max(self.cell_values(cell)))

    def copy(self) -> "QTable":
        return QTable(self.index, self.values.copy(), self.gamma)

    def snapshot(self) -> "QTable":
        """Read-only copy for concurrent readers."""
        snap = self.copy()
        snap.values.setflags(write=False)
        return snap

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": QTABLE_VERSION,
            "n_q": self.n_q,
            "gamma": float(self.gamma),
            "index_map": self.index.to_list(),
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QTable":
        """Build from ``to_dict`` output.

        Raises:
            ModelError: On an unknown version or malformed index map
        """
        if data.get("version") != QTABLE_VERSION:
            raise ModelError(f"Unsupported QTable version {data.get('version')!r}")
        try:
            index = ActionIndex.from_list(data["index_map"], int(data["n_q"]))
            return cls(index, np.array(data["values"], dtype=float), float(data["gamma"]))
        except KeyError as e:
            raise ModelError(f"QTable is missing field {e}") from e

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(canonical_json(self.to_dict()), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "QTable":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"QTable not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ModelError(f"Malformed QTable {path}: {e}") from e


@dataclass(frozen=True)
class RankedPolicy:
    """Per-cell destinations sorted by decreasing Q (ties: smallest destination)."""
    ranking: Tuple[Tuple[int, ...], ...]

    @classmethod
    def from_qtable(cls, q: QTable) -> "RankedPolicy":
        ranking = []
        for cell, dests in enumerate(q.index.actions):
            vals = q.cell_values(cell)
            order = sorted(range(len(dests)), key=lambda k: (-vals[k], dests[k]))
            ranking.append(tuple(dests[k] for k in order))
        return cls(tuple(ranking))

    @property
    def n_q(self) -> int:
        return len(self.ranking)

    def first(self, cell: int) -> int:
        """Top-ranked destination of ``cell``."""
        return self.ranking[cell][0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": QTABLE_VERSION,
            "n_q": self.n_q,
            "ranking": [list(r) for r in self.ranking],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RankedPolicy":
        return cls(tuple(tuple(int(d) for d in r) for r in data["ranking"]))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(canonical_json(self.to_dict()), encoding="utf-8")
        return path
