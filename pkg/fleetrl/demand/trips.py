"""Trip records and delimited-text ingestion.

Two trip file schemas are accepted, both with a header row:

- cell mode: ``pickup_cell, dropoff_cell, start_time, duration, fare``
- geographic mode: ``pickup_lon, pickup_lat, dropoff_lon, dropoff_lat,
  start_time, duration, fare``; positions are mapped to cells through the
  grid geometry

Rows that cannot become a valid TripRecord are dropped and counted by
reason. Only an unreadable source is fatal.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..exceptions import IngestError
from .geometry import GridGeometry, Point

logger = logging.getLogger(__name__)

CELL_COLUMNS = ("pickup_cell", "dropoff_cell", "start_time", "duration", "fare")
LONLAT_COLUMNS = (
    "pickup_lon", "pickup_lat", "dropoff_lon", "dropoff_lat",
    "start_time", "duration", "fare",
)

# A source with more than this share of rejected rows is flagged
HIGH_REJECTION_RATE = 0.5

TripSource = Union[str, Path, pd.DataFrame, Iterable[Mapping[str, Any]]]


@dataclass(frozen=True)
class TripRecord:
    """One ride between two cells.

    Attributes:
        pickup: Pickup cell
        dropoff: Dropoff cell
        start_time: Tick the request appears
        duration: In-vehicle time in ticks, > 0
        fare: Fare paid, >= 0
        pickup_point: Exact pickup position in km, when known
        dropoff_point: Exact dropoff position in km, when known
    """
    pickup: int
    dropoff: int
    start_time: int
    duration: float
    fare: float
    pickup_point: Optional[Point] = None
    dropoff_point: Optional[Point] = None

    def __post_init__(self) -> None:
        if self.pickup < 0 or self.dropoff < 0:
            raise ValueError(f"Cell ids must be nonnegative, got {self.pickup}->{self.dropoff}")
        if not self.duration > 0:
            raise ValueError(f"Trip duration must be positive, got {self.duration}")
        if not self.fare >= 0:
            raise ValueError(f"Trip fare must be nonnegative, got {self.fare}")

    @property
    def reward(self) -> float:
        """Fare per tick of service, before motion constraints."""
        return self.fare / self.duration

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pickup": self.pickup,
            "dropoff": self.dropoff,
            "start_time": self.start_time,
            "duration": self.duration,
            "fare": self.fare,
            "pickup_point": list(self.pickup_point) if self.pickup_point else None,
            "dropoff_point": list(self.dropoff_point) if self.dropoff_point else None,
        }


@dataclass
class IngestStats:
    """Row accounting for one ingestion.

    Attributes:
        total_rows: Data rows seen, malformed lines included
        accepted: Rows turned into TripRecords
        rejected: Rows dropped
        reasons: Rejected row count per reason
    """
    total_rows: int = 0
    accepted: int = 0
    rejected: int = 0
    reasons: Dict[str, int] = field(default_factory=dict)

    def reject(self, reason: str, count: int = 1) -> None:
        if count <= 0:
            return
        self.rejected += count
        self.reasons[reason] = self.reasons.get(reason, 0) + count

    @property
    def rejection_rate(self) -> float:
        return self.rejected / self.total_rows if self.total_rows else 0.0

    @property
    def high_rejection(self) -> bool:
        """True when more than half of the rows were rejected."""
        return self.rejection_rate > HIGH_REJECTION_RATE

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total_rows": self.total_rows,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejection_rate": round(self.rejection_rate, 6),
            "high_rejection": self.high_rejection,
            "reasons": dict(sorted(self.reasons.items())),
        }


@dataclass
class IngestResult:
    """Validated records plus the accounting that produced them."""
    records: List[TripRecord]
    stats: IngestStats

    def __iter__(self) -> Iterator[TripRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _read_frame(path: Path, delimiter: str, stats: IngestStats) -> pd.DataFrame:
    """Read a delimited file, counting malformed lines instead of failing."""
    if not path.exists():
        raise IngestError("Trip file not found", path=path)
    if not path.is_file():
        raise IngestError("Trip source is not a file", path=path)

    def on_bad_line(fields: List[str]) -> None:
        stats.total_rows += 1
        stats.reject("malformed_line")
        return None

    try:
        return pd.read_csv(
            path,
            sep=delimiter,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            on_bad_lines=on_bad_line,
            engine="python",
        )
    except pd.errors.EmptyDataError as e:
        raise IngestError("Trip file is empty", path=path, row=0) from e
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        row = int(match.group(1)) - 1 if match else None
        raise IngestError(f"Unreadable trip file: {e}", path=path, row=row) from e
    except UnicodeDecodeError as e:
        raise IngestError(f"Trip file is not text: {e.reason}", path=path) from e
    except OSError as e:
        raise IngestError(f"Cannot read trip file: {e}", path=path) from e


def _to_frame(source: TripSource, delimiter: str, stats: IngestStats) -> Tuple[pd.DataFrame, Optional[Path]]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        return _read_frame(path, delimiter, stats), path
    if isinstance(source, pd.DataFrame):
        return source.copy(), None
    try:
        return pd.DataFrame(list(source)), None
    except (TypeError, ValueError) as e:
        raise IngestError(f"Trip source is not a sequence of rows: {e}") from e


def _numeric(frame: pd.DataFrame, column: str) -> pd.Series:
    values = frame[column]
    if values.dtype == object:
        values = values.astype(str).str.strip().replace("", np.nan)
    return pd.to_numeric(values, errors="coerce")


def ingest_trips(
    source: TripSource,
    geometry: GridGeometry,
    delimiter: str = ",",
) -> IngestResult:
    """Read and validate trip records.

    Args:
        source: Path to a delimited file, a DataFrame, or an iterable of row mappings
        geometry: Grid used for cell range checks and lon/lat mapping
        delimiter: Field separator for file sources

    Returns:
        IngestResult with records in source order and rejection statistics

    Raises:
        IngestError: If the source cannot be read or lacks the required columns
    """
    stats = IngestStats()
    frame, path = _to_frame(source, delimiter, stats)
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    columns = set(frame.columns)

    if columns.issuperset(CELL_COLUMNS):
        mode = "cell"
    elif columns.issuperset(LONLAT_COLUMNS):
        mode = "lonlat"
    elif frame.empty and not columns:
        mode = "cell"
        frame = pd.DataFrame(columns=list(CELL_COLUMNS))
    else:
        missing = sorted(set(CELL_COLUMNS) - columns)
        raise IngestError(f"Missing required column(s): {', '.join(missing)}", path=path, row=0)

    stats.total_rows += len(frame)
    if frame.empty:
        logger.info(f"No trip rows in {path or 'source'}")
        return IngestResult([], stats)

    start = _numeric(frame, "start_time")
    duration = _numeric(frame, "duration")
    fare = _numeric(frame, "fare")

    pickup_points: Optional[np.ndarray] = None
    dropoff_points: Optional[np.ndarray] = None
    if mode == "cell":
        pickup = _numeric(frame, "pickup_cell")
        dropoff = _numeric(frame, "dropoff_cell")
        missing_cell = pickup.isna() | dropoff.isna()
    else:
        coords = {c: _numeric(frame, c) for c in LONLAT_COLUMNS[:4]}
        missing_cell = pd.concat(list(coords.values()), axis=1).isna().any(axis=1)
        pickup_points = np.full((len(frame), 2), np.nan)
        dropoff_points = np.full((len(frame), 2), np.nan)
        p_cells, d_cells = [], []
        for k in range(len(frame)):
            if missing_cell.iat[k]:
                p_cells.append(np.nan)
                d_cells.append(np.nan)
                continue
            p = geometry.project(coords["pickup_lon"].iat[k], coords["pickup_lat"].iat[k])
            d = geometry.project(coords["dropoff_lon"].iat[k], coords["dropoff_lat"].iat[k])
            pickup_points[k], dropoff_points[k] = p, d
            pc, dc = geometry.locate(p), geometry.locate(d)
            p_cells.append(np.nan if pc is None else pc)
            d_cells.append(np.nan if dc is None else dc)
        pickup = pd.Series(p_cells, index=frame.index, dtype=float)
        dropoff = pd.Series(d_cells, index=frame.index, dtype=float)

    # Reasons are assigned in priority order; each row counts once
    pending = pd.Series(True, index=frame.index)
    checks = [
        ("missing_cell", missing_cell),
        ("cell_out_of_range", pickup.isna() | dropoff.isna()
         | (pickup < 0) | (pickup >= geometry.n_q) | (dropoff < 0) | (dropoff >= geometry.n_q)
         | (pickup % 1 != 0) | (dropoff % 1 != 0)),
        ("bad_start_time", start.isna() | (start % 1 != 0)),
        ("bad_duration", duration.isna()),
        ("nonpositive_duration", duration <= 0),
        ("bad_fare", fare.isna() | (fare < 0)),
    ]
    for reason, mask in checks:
        hit = pending & mask.fillna(True)
        stats.reject(reason, int(hit.sum()))
        pending &= ~hit

    records: List[TripRecord] = []
    for k in np.flatnonzero(pending.to_numpy()):
        records.append(
            TripRecord(
                pickup=int(pickup.iat[k]),
                dropoff=int(dropoff.iat[k]),
                start_time=int(start.iat[k]),
                duration=float(duration.iat[k]),
                fare=float(fare.iat[k]),
                pickup_point=tuple(pickup_points[k]) if pickup_points is not None else None,
                dropoff_point=tuple(dropoff_points[k]) if dropoff_points is not None else None,
            )
        )
    stats.accepted = len(records)

    logger.info(
        f"Ingested {stats.accepted}/{stats.total_rows} trip rows from {path or 'source'} "
        f"({stats.rejected} rejected)"
    )
    if stats.high_rejection:
        logger.warning(
            f"{stats.rejection_rate:.0%} of trip rows rejected from {path or 'source'}: "
            f"{dict(sorted(stats.reasons.items()))}"
        )
    return IngestResult(records, stats)


class RecordedTripStream:
    """Replays a fixed list of trips tick by tick.

    ``next_window`` returns the trips whose start tick equals the current
    tick, then advances. Once every trip has been served the stream reports
    exhaustion by returning None.
    """

    def __init__(self, records: Iterable[TripRecord]):
        self._by_tick: Dict[int, List[TripRecord]] = {}
        for rec in records:
            self._by_tick.setdefault(rec.start_time, []).append(rec)
        self._last_tick = max(self._by_tick) if self._by_tick else -1
        self.tick = 0

    @property
    def exhausted(self) -> bool:
        return self.tick > self._last_tick

    def next_window(self) -> Optional[List[TripRecord]]:
        """Return this tick's trips and advance, or None once exhausted."""
        if self.exhausted:
            return None
        batch = self._by_tick.get(self.tick, [])
        self.tick += 1
        return list(batch)
