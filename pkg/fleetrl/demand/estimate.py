"""Demand model and its estimation from trip records.

A DemandModel summarizes a city grid with three n_q x n_q matrices:

- L[i, j]: probability that a request i -> j appears in an observation window
- D[i, j]: average reward M[i, j] * fare / duration of such a request
- M[i, j]: motion-constraint factor (1 by default)

The diagonal D[i, i] also averages in zero rewards for windows in which cell
i saw no request at all, so it is the expected reward of waiting in place.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..exceptions import ModelError
from ..utils.hashing import canonical_json
from .trips import TripRecord

logger = logging.getLogger(__name__)

MODEL_KIND = "demand-model"
MODEL_VERSION = 1

# Row sums may exceed the bound by accumulated rounding only
ROW_SUM_TOL = 1e-12

# Estimated off-diagonal row mass is scaled down to this when it reaches 1
DEFAULT_ROW_CAP = 0.999


@dataclass
class DemandModel:
    """Per-pair request probabilities and average rewards.

    Attributes:
        n_q: Number of cells
        L: Request probability per window, shape (n_q, n_q)
        D: Average reward, shape (n_q, n_q)
        M: Motion-constraint factors, shape (n_q, n_q)
        windows: Observation windows the estimate is based on (0 if not estimated)
    """
    n_q: int
    L: np.ndarray
    D: np.ndarray
    M: np.ndarray
    windows: int = 0

    def __post_init__(self) -> None:
        self.L = np.asarray(self.L, dtype=float)
        self.D = np.asarray(self.D, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        self.validate()

    def validate(self) -> None:
        """Check every invariant.

        Raises:
            ModelError: On the first violated invariant
        """
        n = self.n_q
        if n < 2:
            raise ModelError(f"A demand model needs at least 2 cells, got {n}")
        for name in ("L", "D", "M"):
            arr = getattr(self, name)
            if arr.shape != (n, n):
                raise ModelError(f"{name} has shape {arr.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} contains non-finite entries")
        if np.any(self.L < 0) or np.any(self.L > 1):
            raise ModelError("L entries must lie in [0, 1]")
        excess = self.off_diagonal_mass() - 1.0
        bad = np.flatnonzero(excess > ROW_SUM_TOL)
        if bad.size:
            raise ModelError(
                f"Row {int(bad[0])} of L leaves with total probability "
                f"{1.0 + excess[bad[0]]:.6f} > 1"
            )
        if np.any(self.D < 0):
            raise ModelError("D entries must be nonnegative")
        if np.any(self.M <= 0):
            raise ModelError("M entries must be positive")

    def off_diagonal_mass(self) -> np.ndarray:
        """Return sum_{j != i} L[i, j] for every row i."""
        return self.L.sum(axis=1) - np.diag(self.L)

    def stay_probability(self) -> np.ndarray:
        """Return 1 + L[i, i] - sum_j L[i, j] for every cell i."""
        return 1.0 + np.diag(self.L) - self.L.sum(axis=1)

    @classmethod
    def zeros(cls, n_q: int) -> "DemandModel":
        """An empty model: no requests, no rewards."""
        return cls(n_q, np.zeros((n_q, n_q)), np.zeros((n_q, n_q)), np.ones((n_q, n_q)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": MODEL_KIND,
            "version": MODEL_VERSION,
            "n_q": self.n_q,
            "windows": self.windows,
            "L": self.L.tolist(),
            "D": self.D.tolist(),
            "M": self.M.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DemandModel":
        """Build from ``to_dict`` output.

        Raises:
            ModelError: If the payload is not a demand model
        """
        if data.get("kind") != MODEL_KIND:
            raise ModelError(f"Expected kind '{MODEL_KIND}', got {data.get('kind')!r}")
        try:
            return cls(
                n_q=int(data["n_q"]),
                L=np.array(data["L"], dtype=float),
                D=np.array(data["D"], dtype=float),
                M=np.array(data["M"], dtype=float),
                windows=int(data.get("windows", 0)),
            )
        except KeyError as e:
            raise ModelError(f"Demand model is missing field {e}") from e

    def save(self, path: Union[str, Path]) -> Path:
        """Write as canonical JSON and return the path."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(canonical_json(self.to_dict()), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DemandModel":
        """Read a model written by ``save``."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Demand model not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ModelError(f"Malformed demand model {path}: {e}") from e
        return cls.from_dict(data)


def _trip_frame(trips: Iterable[TripRecord], n_q: int) -> pd.DataFrame:
    frame = pd.DataFrame(
        [(t.pickup, t.dropoff, t.start_time, t.duration, t.fare) for t in trips],
        columns=["pickup", "dropoff", "start_time", "duration", "fare"],
    )
    if not frame.empty:
        bad = (frame["pickup"] >= n_q) | (frame["dropoff"] >= n_q)
        if bad.any():
            row = frame[bad].iloc[0]
            raise ModelError(
                f"Trip {int(row.pickup)}->{int(row.dropoff)} references a cell outside 0..{n_q - 1}"
            )
    return frame


def estimate_demand(
    trips: Iterable[TripRecord],
    n_q: int,
    idle_obs: Optional[Sequence[float]] = None,
    window: int = 1,
    n_windows: Optional[int] = None,
    motion: Optional[np.ndarray] = None,
    row_cap: float = DEFAULT_ROW_CAP,
) -> DemandModel:
    """Estimate L and D from trip records.

    Windows are ``start_time // window``; unless ``n_windows`` is given the
    observation period runs from window 0 to the last window containing a
    trip.

    Args:
        trips: Trip records (order does not matter)
        n_q: Number of cells
        idle_obs: Customer-free observations per cell, pooled as zero rewards
            into D[i, i]. None counts the windows in which cell i had no request.
        window: Window length in ticks
        n_windows: Total windows observed
        motion: Motion-constraint matrix M (None: all ones)
        row_cap: Off-diagonal mass a row is scaled down to if the empirical
            frequencies reach or exceed 1

    Returns:
        Estimated DemandModel

    Raises:
        ModelError: If a trip references a cell outside the grid
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    M = np.ones((n_q, n_q)) if motion is None else np.asarray(motion, dtype=float)
    frame = _trip_frame(trips, n_q)
    L = np.zeros((n_q, n_q))
    D = np.zeros((n_q, n_q))

    if frame.empty:
        windows_total = int(n_windows or 0)
        logger.info(f"No trips to estimate from; returning empty {n_q}-cell model")
        return DemandModel(n_q, L, D, M, windows=windows_total)

    frame["window"] = frame["start_time"] // window
    windows_total = int(n_windows) if n_windows is not None else int(frame["window"].max()) + 1
    if windows_total < 1:
        raise ValueError("n_windows must be >= 1 when trips are given")

    pickup = frame["pickup"].to_numpy()
    dropoff = frame["dropoff"].to_numpy()
    frame["reward"] = M[pickup, dropoff] * frame["fare"] / frame["duration"]

    sums = frame.groupby(["pickup", "dropoff"])["reward"].agg(["sum", "count"])
    pairs = sums.index.to_frame(index=False).to_numpy()
    D[pairs[:, 0], pairs[:, 1]] = sums["sum"].to_numpy() / sums["count"].to_numpy()

    active = frame.drop_duplicates(["pickup", "dropoff", "window"])
    hits = active.groupby(["pickup", "dropoff"]).size()
    hit_pairs = hits.index.to_frame(index=False).to_numpy()
    L[hit_pairs[:, 0], hit_pairs[:, 1]] = hits.to_numpy() / windows_total

    if idle_obs is None:
        busy = frame.drop_duplicates(["pickup", "window"]).groupby("pickup").size()
        idle = np.full(n_q, float(windows_total))
        idle[busy.index.to_numpy()] -= busy.to_numpy()
        idle = np.maximum(idle, 0.0)
    else:
        idle = np.asarray(idle_obs, dtype=float)
        if idle.shape != (n_q,):
            raise ValueError(f"idle_obs must have length {n_q}, got {idle.shape}")

    # Stay rewards average over served windows and customer-free ones
    diag = np.arange(n_q)
    stay_sum = np.zeros(n_q)
    stay_count = np.zeros(n_q)
    stays = sums.loc[sums.index.get_level_values(0) == sums.index.get_level_values(1)]
    cells = stays.index.get_level_values(0).to_numpy()
    stay_sum[cells] = stays["sum"].to_numpy()
    stay_count[cells] = stays["count"].to_numpy()
    denom = stay_count + idle
    D[diag, diag] = np.divide(stay_sum, denom, out=np.zeros(n_q), where=denom > 0)

    mass = L.sum(axis=1) - np.diag(L)
    for i in np.flatnonzero(mass >= 1.0):
        scale = row_cap / mass[i]
        stay = L[i, i]
        L[i] *= scale
        L[i, i] = stay
        logger.warning(
            f"Cell {int(i)}: empirical departure frequencies sum to {mass[i]:.3f}; "
            f"scaled to {row_cap}"
        )

    logger.info(
        f"Estimated {n_q}-cell demand model from {len(frame)} trips "
        f"over {windows_total} windows"
    )
    return DemandModel(n_q, L, D, M, windows=windows_total)
