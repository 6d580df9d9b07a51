"""Demand modeling: grid geometry, trip ingestion, estimation, synthetic scenarios."""

from .estimate import DemandModel, estimate_demand
from .geometry import GridGeometry, distance
from .synthetic import TripStream, rate_matrix, synth_demand
from .trips import (
    IngestResult,
    IngestStats,
    RecordedTripStream,
    TripRecord,
    ingest_trips,
)

__all__ = [
    "DemandModel",
    "estimate_demand",
    "GridGeometry",
    "distance",
    "TripStream",
    "rate_matrix",
    "synth_demand",
    "IngestResult",
    "IngestStats",
    "RecordedTripStream",
    "TripRecord",
    "ingest_trips",
]
