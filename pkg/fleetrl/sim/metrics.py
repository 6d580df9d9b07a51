"""Run metrics and their export.

A run directory holds one CSV per trace plus ``summary.json``:

    revenue.csv        tick, revenue (cumulative)
    trips.csv          one row per delivered ride
    q_trace.csv        tracked Q values every snapshot tick
    disagreement.csv   tick, disagreement
    telemetry.csv      one row per learning observation
    potential.csv      one row per assignment game
    graphs.csv         communication weights per tick (when recorded)
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd

from ..config import SimConfig
from ..consensus.graph import CommGraph, schedule_frame
from ..utils.hashing import canonical_json, stable_digest

logger = logging.getLogger(__name__)

TRIP_COLUMNS = ["tick", "agent", "task", "pickup_cell", "dropoff_cell", "fare", "pooled", "wait", "ride_ticks"]
Q_TRACE_COLUMNS = ["tick", "cell", "dest", "agent", "value"]
TELEMETRY_COLUMNS = ["tick", "agent", "pair", "r", "alpha", "injected", "underflow"]
POTENTIAL_COLUMNS = ["tick", "players", "tasks", "rounds", "converged", "potential", "assigned"]


def config_digest(cfg: SimConfig) -> str:
    """Digest of every setting except the seed."""
    data = cfg.to_dict()
    data.pop("seed", None)
    return stable_digest(data)


def run_dir_name(cfg: SimConfig) -> str:
    """Run directory name: ``run-<config digest>-s<seed>``."""
    return f"run-{config_digest(cfg)}-s{cfg.seed}"


@dataclass
class RunMetrics:
    """Everything one simulation run recorded.

    Attributes:
        run_id: Run directory name
        policy: Policy value
        seed: Run seed
        n_agents: Fleet size
        horizon: Ticks requested
        ticks: Ticks actually simulated
        ended_early: True if the demand source ran out before the horizon
        revenue: Cumulative revenue after each tick
        trips: Delivered rides
        disagreement: Largest gap between agents' Q estimates after each tick
        q_trace: Tracked Q values
        telemetry: Learning observations
        potential: Assignment game outcomes
        graphs: Communication graph of each tick (when recorded)
        requests: Requests spawned
        expired: Requests that expired unserved
    """
    run_id: str
    policy: str
    seed: int
    n_agents: int
    horizon: int
    ticks: int = 0
    ended_early: bool = False
    revenue: List[float] = field(default_factory=list)
    trips: List[Dict[str, Any]] = field(default_factory=list)
    disagreement: List[float] = field(default_factory=list)
    q_trace: List[Dict[str, Any]] = field(default_factory=list)
    telemetry: List[Dict[str, Any]] = field(default_factory=list)
    potential: List[Dict[str, Any]] = field(default_factory=list)
    graphs: List[CommGraph] = field(default_factory=list, repr=False)
    requests: int = 0
    expired: int = 0

    @property
    def total_revenue(self) -> float:
        return self.revenue[-1] if self.revenue else 0.0

    @property
    def per_trip_mean(self) -> float:
        """Average fare per delivered ride, 0 without rides."""
        return self.total_revenue / len(self.trips) if self.trips else 0.0

    def revenue_between(self, start: int, stop: int) -> float:
        """Revenue earned in ticks [start, stop)."""
        if not self.revenue or start >= stop:
            return 0.0
        stop = min(stop, len(self.revenue))
        before = self.revenue[start - 1] if start > 0 else 0.0
        return self.revenue[stop - 1] - before

    def summary(self) -> Dict[str, Any]:
        """Headline numbers of the run."""
        unconverged = sum(1 for row in self.potential if not row["converged"])
        return {
            "run_id": self.run_id,
            "policy": self.policy,
            "seed": self.seed,
            "n_agents": self.n_agents,
            "horizon": self.horizon,
            "ticks": self.ticks,
            "ended_early": self.ended_early,
            "total_revenue": self.total_revenue,
            "trips": len(self.trips),
            "per_trip_mean": self.per_trip_mean,
            "requests": self.requests,
            "expired": self.expired,
            "games": len(self.potential),
            "unconverged_games": unconverged,
            "final_disagreement": self.disagreement[-1] if self.disagreement else 0.0,
        }

    def to_dict(self) -> Dict[str, Any]:
        return self.summary()

    def frames(self) -> Dict[str, pd.DataFrame]:
        """Every trace as a DataFrame, keyed by file stem."""
        ticks = list(range(len(self.revenue)))
        frames = {
            "revenue": pd.DataFrame({"tick": ticks, "revenue": self.revenue}),
            "trips": pd.DataFrame(self.trips, columns=TRIP_COLUMNS),
            "q_trace": pd.DataFrame(self.q_trace, columns=Q_TRACE_COLUMNS),
            "disagreement": pd.DataFrame(
                {"tick": list(range(len(self.disagreement))), "disagreement": self.disagreement}
            ),
            "telemetry": pd.DataFrame(self.telemetry, columns=TELEMETRY_COLUMNS),
            "potential": pd.DataFrame(self.potential, columns=POTENTIAL_COLUMNS),
        }
        if self.graphs:
            frames["graphs"] = schedule_frame(self.graphs)
        return frames

    def export(self, directory: Union[str, Path]) -> Path:
        """Write every trace and the summary into ``directory``.

        Returns:
            The directory written
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for stem, frame in self.frames().items():
            frame.to_csv(directory / f"{stem}.csv", index=False)
        (directory / "summary.json").write_text(canonical_json(self.summary()), encoding="utf-8")
        logger.info(f"Wrote run metrics to {directory}")
        return directory
