"""Grid partition of the service area.

Cells are numbered row-major from the south-west corner: cell
``r * cols + c`` covers ``[c * s, (c + 1) * s) x [r * s, (r + 1) * s)`` km.
The north and east map edges belong to the last row and column so that every
point of the closed map rectangle has exactly one cell.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ..config import GridConfig
from ..exceptions import ConfigError

Point = Tuple[float, float]

# Equirectangular projection constants (km per degree)
KM_PER_DEG_LAT = 110.574
KM_PER_DEG_LON_EQUATOR = 111.320


@dataclass(frozen=True)
class GridGeometry:
    """Cell lookup and distances over a rectangular grid.

    Attributes:
        rows: Cell rows
        cols: Cell columns
        cell_km: Cell side in km
        origin_lon: Longitude of the south-west corner, for lon/lat lookups
        origin_lat: Latitude of the south-west corner, for lon/lat lookups
    """
    rows: int
    cols: int
    cell_km: float
    origin_lon: Optional[float] = None
    origin_lat: Optional[float] = None
    centroids: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.rows * self.cols < 2:
            raise ConfigError("A grid needs at least 2 cells")
        idx = np.arange(self.rows * self.cols)
        xs = (idx % self.cols + 0.5) * self.cell_km
        ys = (idx // self.cols + 0.5) * self.cell_km
        centroids = np.column_stack([xs, ys])
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)

    @classmethod
    def from_config(cls, cfg: GridConfig) -> "GridGeometry":
        """Build from a GridConfig."""
        return cls(cfg.rows, cfg.cols, cfg.cell_km, cfg.origin_lon, cfg.origin_lat)

    @property
    def n_q(self) -> int:
        return self.rows * self.cols

    @property
    def width_km(self) -> float:
        return self.cols * self.cell_km

    @property
    def height_km(self) -> float:
        return self.rows * self.cell_km

    def locate(self, point: Sequence[float]) -> Optional[int]:
        """Return the cell containing ``point``, or None outside the map."""
        x, y = float(point[0]), float(point[1])
        if not (0.0 <= x <= self.width_km and 0.0 <= y <= self.height_km):
            return None
        col = min(int(x // self.cell_km), self.cols - 1)
        row = min(int(y // self.cell_km), self.rows - 1)
        return row * self.cols + col

    def project(self, lon: float, lat: float) -> Point:
        """Project lon/lat to km offsets from the grid origin.

        Raises:
            ConfigError: If the grid has no geographic origin
        """
        if self.origin_lon is None or self.origin_lat is None:
            raise ConfigError("Grid has no origin_lon/origin_lat; cannot map lon/lat")
        kx = KM_PER_DEG_LON_EQUATOR * math.cos(math.radians(self.origin_lat))
        return ((lon - self.origin_lon) * kx, (lat - self.origin_lat) * KM_PER_DEG_LAT)

    def locate_lonlat(self, lon: float, lat: float) -> Optional[int]:
        """Return the cell containing a lon/lat position, or None outside the map."""
        return self.locate(self.project(lon, lat))

    def centroid(self, cell: int) -> Point:
        c = self.centroids[cell]
        return float(c[0]), float(c[1])

    def cell_distance(self, i: int, j: int) -> float:
        """Euclidean distance between two cell centroids in km."""
        return float(np.hypot(*(self.centroids[i] - self.centroids[j])))

    def distance_matrix(self) -> np.ndarray:
        """Return the n_q x n_q centroid distance matrix."""
        diff = self.centroids[:, None, :] - self.centroids[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def sample_point(self, cell: int, rng: np.random.Generator) -> Point:
        """Draw a point uniformly inside ``cell``."""
        row, col = divmod(cell, self.cols)
        u, v = rng.random(2)
        return (float((col + u) * self.cell_km), float((row + v) * self.cell_km))


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between two points in km."""
    return math.hypot(a[0] - b[0], a[1] - b[1])
