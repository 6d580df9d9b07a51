"""MDP construction from a demand model.

An agent in cell i either picks its next move (the chosen-action case: the
move to cell j is deterministic) or follows customers (the single-action
case: it leaves for j with probability L[i, j] and stays with probability
1 + L[i, i] - sum_j L[i, j]). Both cases share the reward model

    r(i, j) = D[i, j]                                       for i != j
    r(i, i) = L[i, i] * D[i, i] / (1 + L[i, i] - sum_k L[i, k])

MdpModel keeps the chosen-action rows (one per state-action pair) and the
single-action rows (``P_bar``/``R_bar``, one per cell). Hand-built models
may omit the single-action rows; they are then ordinary finite MDPs.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from ..demand.estimate import DemandModel
from ..exceptions import ModelError
from ..utils.hashing import canonical_json
from .qtable import ActionIndex

logger = logging.getLogger(__name__)

MODEL_KIND = "mdp-model"
MODEL_VERSION = 1

ROW_SUM_TOL = 1e-9


@dataclass
class MdpModel:
    """Finite MDP over grid cells.

    Attributes:
        index: Action sets A(l) and the flat pair layout
        P: Successor distribution per state-action pair, shape (pairs, n_q)
        R: Reward per state-action pair and successor, shape (pairs, n_q)
        gamma: Discount factor in (0, 1)
        P_bar: Single-action transition rows per cell, shape (n_q, n_q)
        R_bar: Single-action rewards per cell and successor, shape (n_q, n_q)
    """
    index: ActionIndex
    P: np.ndarray
    R: np.ndarray
    gamma: float
    P_bar: Optional[np.ndarray] = None
    R_bar: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.P = np.asarray(self.P, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.P_bar is not None:
            self.P_bar = np.asarray(self.P_bar, dtype=float)
        if self.R_bar is not None:
            self.R_bar = np.asarray(self.R_bar, dtype=float)
        self.validate()

    @property
    def n_q(self) -> int:
        return self.index.n_q

    @property
    def has_aggregate(self) -> bool:
        """True when single-action rows are present."""
        return self.P_bar is not None

    def validate(self) -> None:
        """Check shapes, probability ranges and row sums.

        Raises:
            ModelError: On the first violated invariant
        """
        if not 0.0 < self.gamma < 1.0:
            raise ModelError(f"gamma must lie in (0, 1), got {self.gamma}")
        n, size = self.n_q, self.index.size
        for name, arr, shape in (("P", self.P, (size, n)), ("R", self.R, (size, n))):
            if arr.shape != shape:
                raise ModelError(f"{name} has shape {arr.shape}, expected {shape}")
        if (self.P_bar is None) != (self.R_bar is None):
            raise ModelError("P_bar and R_bar must be given together")
        rows = [("P", self.P)]
        if self.P_bar is not None:
            for name, arr in (("P_bar", self.P_bar), ("R_bar", self.R_bar)):
                assert arr is not None
                if arr.shape != (n, n):
                    raise ModelError(f"{name} has shape {arr.shape}, expected {(n, n)}")
            rows.append(("P_bar", self.P_bar))
        for name, arr in rows:
            if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise ModelError(f"{name} entries must lie in [0, 1]")
            sums = arr.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
            if bad.size:
                raise ModelError(f"{name} row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")

    def expected_rewards(self) -> np.ndarray:
        """Expected immediate reward of every state-action pair."""
        return np.einsum("ak,ak->a", self.P, self.R)

    def aggregate_rewards(self) -> np.ndarray:
        """Expected immediate reward of every cell under the single-action rows."""
        if self.P_bar is None or self.R_bar is None:
            raise ModelError("Model has no single-action rows")
        return np.einsum("ik,ik->i", self.P_bar, self.R_bar)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "kind": MODEL_KIND,
            "version": MODEL_VERSION,
            "n_q": self.n_q,
            "gamma": float(self.gamma),
            "actions": [list(a) for a in self.index.actions],
            "P": self.P.tolist(),
            "R": self.R.tolist(),
        }
        if self.P_bar is not None and self.R_bar is not None:
            data["P_bar"] = self.P_bar.tolist()
            data["R_bar"] = self.R_bar.tolist()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MdpModel":
        """Build from ``to_dict`` output.

        Raises:
            ModelError: If the payload is not an MDP model
        """
        if data.get("kind") != MODEL_KIND:
            raise ModelError(f"Expected kind '{MODEL_KIND}', got {data.get('kind')!r}")
        try:
            return cls(
                index=ActionIndex(data["actions"]),
                P=np.array(data["P"], dtype=float),
                R=np.array(data["R"], dtype=float),
                gamma=float(data["gamma"]),
                P_bar=np.array(data["P_bar"], dtype=float) if "P_bar" in data else None,
                R_bar=np.array(data["R_bar"], dtype=float) if "R_bar" in data else None,
            )
        except KeyError as e:
            raise ModelError(f"MDP model is missing field {e}") from e

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(canonical_json(self.to_dict()), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MdpModel":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"MDP model not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ModelError(f"Malformed MDP model {path}: {e}") from e


def reward_matrix(dm: DemandModel) -> np.ndarray:
    """Return r(i, j) for a demand model.

    Raises:
        ModelError: If a cell's stay denominator is not positive
    """
    stay = dm.stay_probability()
    bad = np.flatnonzero(stay <= 0)
    if bad.size:
        i = int(bad[0])
        raise ModelError(
            f"Cell {i}: 1 + L[{i},{i}] - sum_k L[{i},k] = {stay[i]:.3g} is not positive"
        )
    r = dm.D.copy()
    diag = np.arange(dm.n_q)
    r[diag, diag] = np.diag(dm.L) * np.diag(dm.D) / stay
    return r


def build_mdp(dm: DemandModel, gamma: float, sparse_actions: bool = False) -> MdpModel:
    """Build the MDP of a demand model.

    Args:
        dm: Demand model
        gamma: Discount factor in (0, 1)
        sparse_actions: Keep only moves to destinations with L > 0 (staying is always kept)

    Returns:
        MdpModel with chosen-action and single-action rows

    Raises:
        ModelError: If a stay denominator is not positive or gamma is out of range
    """
    if not 0.0 < gamma < 1.0:
        raise ModelError(f"gamma must lie in (0, 1), got {gamma}")
    n_q = dm.n_q
    r = reward_matrix(dm)

    if sparse_actions:
        actions = [sorted(set(np.flatnonzero(dm.L[l] > 0).tolist()) | {l}) for l in range(n_q)]
        index = ActionIndex(actions)
    else:
        index = ActionIndex.dense(n_q)

    P = np.zeros((index.size, n_q))
    R = np.zeros((index.size, n_q))
    rows = np.arange(index.size)
    P[rows, index.dests] = 1.0
    R[rows, index.dests] = r[index.cells, index.dests]

    P_bar = dm.L.copy()
    diag = np.arange(n_q)
    P_bar[diag, diag] = 1.0 - dm.off_diagonal_mass()

    logger.debug(f"Built MDP: {n_q} cells, {index.size} state-action pairs, gamma={gamma}")
    return MdpModel(index, P, R, gamma, P_bar=P_bar, R_bar=r)
