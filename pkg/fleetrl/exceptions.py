"""Exception hierarchy for fleetrl.

Every error raised on purpose by the library derives from FleetRLError and
from the built-in type that describes it (ValueError for bad inputs,
RuntimeError for failed procedures), so callers can catch either.
"""

from pathlib import Path
from typing import Optional, Union


class FleetRLError(Exception):
    """Base class for all fleetrl errors."""


class ConfigError(FleetRLError, ValueError):
    """Invalid or unreadable configuration."""


class IngestError(FleetRLError, ValueError):
    """A trip source could not be read.

    Attributes:
        path: Source path, when the source was a file
        row: 1-based data row where reading failed, when known
    """

    def __init__(
        self,
        message: str,
        path: Optional[Union[str, Path]] = None,
        row: Optional[int] = None,
    ):
        self.path = Path(path) if path is not None else None
        self.row = row
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if row is not None:
            where.append(f"row {row}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ModelError(FleetRLError, ValueError):
    """A demand model or MDP violates its invariants."""


class ShapeMismatchError(FleetRLError, ValueError):
    """Two models or state arrays do not share a layout."""


class ConvergenceError(FleetRLError, RuntimeError):
    """An iterative solver hit its iteration cap.

    Attributes:
        residual: Last measured residual
        iterations: Iterations performed
    """

    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")


class SweepMismatchError(FleetRLError, ValueError):
    """Compared configurations differ outside the declared sweep dimensions."""
