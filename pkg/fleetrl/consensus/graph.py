"""Proximity communication graphs with Metropolis weights.

Agents within ``comm_radius`` of each other exchange estimates. The weight
matrix uses the Metropolis rule

    A[i, j] = 1 / (1 + max(deg_i, deg_j))   for neighbors i, j
    A[i, i] = 1 - sum_{j != i} A[i, j]

which is symmetric, hence doubly stochastic, and needs only neighbor degrees.
An agent with no neighbors keeps its own estimate (A[i, i] = 1).
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd

from ..exceptions import ShapeMismatchError

logger = logging.getLogger(__name__)

SCHEDULE_COLUMNS = ["tick", "i", "j", "weight"]


@dataclass(frozen=True, eq=False)
class CommGraph:
    """One tick's communication weights.

    Attributes:
        weights: N x N doubly stochastic matrix
    """
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ShapeMismatchError(f"Weights must be square, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def identity(cls, n_agents: int) -> "CommGraph":
        """No communication at all."""
        return cls(np.eye(n_agents))

    @classmethod
    def complete(cls, n_agents: int) -> "CommGraph":
        """Everyone talks to everyone with uniform weights."""
        return cls(np.full((n_agents, n_agents), 1.0 / max(n_agents, 1)))

    @property
    def n_agents(self) -> int:
        return int(self.weights.shape[0])

    def edges(self) -> List[Tuple[int, int]]:
        """Directed edges (i, j), i != j, with nonzero weight."""
        off = self.weights.copy()
        np.fill_diagonal(off, 0.0)
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(off))]

    def neighbors(self, agent: int) -> List[int]:
        row = self.weights[agent]
        return [int(j) for j in np.flatnonzero(row) if j != agent]

    def is_doubly_stochastic(self, tol: float = 1e-10) -> bool:
        w = self.weights
        return bool(
            np.all(w >= 0)
            and np.allclose(w.sum(axis=0), 1.0, atol=tol, rtol=0)
            and np.allclose(w.sum(axis=1), 1.0, atol=tol, rtol=0)
        )

    def nondegeneracy(self) -> Optional[float]:
        """Smallest nonzero off-diagonal weight, or None without edges."""
        values = [self.weights[i, j] for i, j in self.edges()]
        return float(min(values)) if values else None

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n_agents))
        graph.add_weighted_edges_from((i, j, float(self.weights[i, j])) for i, j in self.edges())
        return graph


def metropolis_weights(adjacency: np.ndarray) -> np.ndarray:
    """Metropolis weights of a symmetric 0/1 adjacency matrix without self-loops."""
    adj = np.asarray(adjacency, dtype=bool)
    n = adj.shape[0]
    deg = adj.sum(axis=1)
    weights = np.zeros((n, n))
    ii, jj = np.nonzero(np.triu(adj, k=1))
    w = 1.0 / (1.0 + np.maximum(deg[ii], deg[jj]))
    weights[ii, jj] = w
    weights[jj, ii] = w
    weights[np.diag_indices(n)] = 1.0 - weights.sum(axis=1)
    return weights


def build_graph(positions: Sequence[Sequence[float]], comm_radius: float) -> CommGraph:
    """Build the proximity graph of agent positions.

    Args:
        positions: One 2D point (km) per agent
        comm_radius: Agents at distance <= comm_radius are neighbors

    Returns:
        CommGraph with Metropolis weights

    Raises:
        ValueError: If comm_radius is not positive
    """
    if comm_radius <= 0:
        raise ValueError(f"comm_radius must be positive, got {comm_radius}")
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return CommGraph(np.zeros((0, 0)))
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    adjacency = dist <= comm_radius
    np.fill_diagonal(adjacency, False)
    return CommGraph(metropolis_weights(adjacency))


def _strongly_connected(n_agents: int, edges: Iterable[Tuple[int, int]]) -> bool:
    if n_agents <= 1:
        return True
    graph = nx.DiGraph()
    graph.add_nodes_from(range(n_agents))
    graph.add_edges_from(edges)
    return bool(nx.is_strongly_connected(graph))


def check_periodic_connectivity(graphs: Sequence[CommGraph], b: int) -> bool:
    """Check that every window of ``b`` consecutive ticks is jointly strongly connected.

    A sequence shorter than ``b`` has no complete window and fails.

    Raises:
        ValueError: If b < 1
    """
    if b < 1:
        raise ValueError(f"b must be >= 1, got {b}")
    if len(graphs) < b:
        return False
    n = graphs[0].n_agents
    edge_sets = [set(g.edges()) for g in graphs]
    for start in range(len(graphs) - b + 1):
        union = set().union(*edge_sets[start:start + b])
        if not _strongly_connected(n, union):
            logger.debug(f"Window starting at tick {start} is not strongly connected")
            return False
    return True


def schedule_frame(graphs: Sequence[CommGraph]) -> pd.DataFrame:
    """Tick-indexed edge list, self weights included, of a graph sequence."""
    rows = []
    for tick, graph in enumerate(graphs):
        ii, jj = np.nonzero(graph.weights)
        for i, j in zip(ii, jj):
            rows.append((tick, int(i), int(j), float(graph.weights[i, j])))
    return pd.DataFrame(rows, columns=SCHEDULE_COLUMNS)


def export_schedule(graphs: Sequence[CommGraph], path: Union[str, Path]) -> Path:
    """Write a graph sequence as CSV with columns tick, i, j, weight."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    schedule_frame(graphs).to_csv(path, index=False)
    return path


def load_schedule(path: Union[str, Path], n_agents: Optional[int] = None) -> List[CommGraph]:
    """Read a schedule written by ``export_schedule``.

    Args:
        path: CSV file
        n_agents: Fleet size (None: one more than the largest agent id)

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If required columns are missing
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Graph schedule not found: {path}")
    frame = pd.read_csv(path)
    missing = [c for c in SCHEDULE_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"Graph schedule {path} lacks column(s): {', '.join(missing)}")
    if frame.empty:
        return []
    n = n_agents if n_agents is not None else int(max(frame["i"].max(), frame["j"].max())) + 1
    graphs = []
    for tick in range(int(frame["tick"].max()) + 1):
        rows = frame[frame["tick"] == tick]
        weights = np.zeros((n, n))
        weights[rows["i"].to_numpy(), rows["j"].to_numpy()] = rows["weight"].to_numpy()
        graphs.append(CommGraph(weights))
    return graphs
