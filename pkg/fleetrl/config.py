"""Configuration dataclasses for fleetrl.

All structured configuration is JSON with nested sections that map one to
one onto the dataclasses below. Every dataclass coerces plain JSON values
(strings, dicts, lists) into its typed fields in ``__post_init__`` and
validates what it can check locally; cross-field checks that need numpy
(row sums of rate matrices) live next to the code that builds the matrices.
"""

import copy
import json
import math
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, Union

from .exceptions import ConfigError

C = TypeVar("C")


class Policy(Enum):
    """Dispatch and learning policy driven by the simulator."""
    DISTRIBUTED_SARSA = "distributed-sarsa"
    CENTRALIZED_SARSA = "centralized-sarsa"
    MDP_STATIC = "mdp-static"        # warm-start Q, never updated
    GREEDY = "greedy"                # immediate reward only
    SHORTEST_PATH = "shortest-path"  # nearest pickup


class DemandKind(Enum):
    """Where simulated requests come from."""
    SYNTHETIC = "synthetic"
    FILE = "file"


class DriftKind(Enum):
    """Shape of a non-stationary demand schedule."""
    NONE = "none"
    STEP = "step"
    SINUSOID = "sinusoid"


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: _to_jsonable(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    return value


def _from_mapping(cls: Type[C], data: Any, section: str) -> C:
    """Build a config dataclass from a mapping, rejecting unknown keys."""
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"Section '{section}' must be an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}  # type: ignore[arg-type]
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown key(s) in '{section}': {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"Invalid '{section}' section: {e}") from e


class _ConfigMixin:
    """to_dict/from_dict shared by every config dataclass."""

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-serializable dict."""
        result = _to_jsonable(self)
        assert isinstance(result, dict)
        return result

    @classmethod
    def from_dict(cls: Type[C], data: Dict[str, Any]) -> C:
        """Build from a JSON-style dict, raising ConfigError on unknown keys."""
        return _from_mapping(cls, copy.deepcopy(data), cls.__name__)


def _coerce_enum(enum_cls: Type[Enum], value: Any, name: str) -> Any:
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"Invalid {name} {value!r}; expected one of: {choices}") from None


def _coerce_path(value: Union[str, Path, None]) -> Optional[Path]:
    if value is None or isinstance(value, Path):
        return value
    return Path(value)


@dataclass
class GridConfig(_ConfigMixin):
    """Rectangular grid of square cells partitioning the city.

    Attributes:
        rows: Number of cell rows
        cols: Number of cell columns (7 x 11 = 77 cells by default)
        cell_km: Side length of a cell in km
        origin_lon: Longitude of the south-west corner (lon/lat trip files only)
        origin_lat: Latitude of the south-west corner (lon/lat trip files only)
    """
    rows: int = 7
    cols: int = 11
    cell_km: float = 2.0
    origin_lon: Optional[float] = None
    origin_lat: Optional[float] = None

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"Grid must have at least one row and column, got {self.rows}x{self.cols}")
        if self.rows * self.cols < 2:
            raise ConfigError("Grid must have at least 2 cells")
        if self.cell_km <= 0:
            raise ConfigError(f"cell_km must be positive, got {self.cell_km}")

    @property
    def n_q(self) -> int:
        """Number of cells."""
        return self.rows * self.cols


@dataclass
class GameConfig(_ConfigMixin):
    """Task-assignment game parameters.

    Attributes:
        r_c: Sensing radius in km; requests strictly closer are visible
        comm_radius: Communication radius in km, at least 2 * r_c
        C: Travel-cost weight per cost unit of distance to the pickup
        cost_unit_km: Length in km of one cost unit (default: one degree of latitude)
        C_prime: Detour penalty weight for pooled pairs
        tau: Log-linear learning temperature
        pooling: Offer pooled pairs of requests as actions
    """
    r_c: float = 1.0
    comm_radius: float = 5.5
    C: float = 20.0
    cost_unit_km: float = 111.0
    C_prime: float = 1.0
    tau: float = 0.5
    pooling: bool = False

    def __post_init__(self) -> None:
        if self.r_c <= 0:
            raise ConfigError(f"r_c must be positive, got {self.r_c}")
        if self.comm_radius < 2 * self.r_c:
            raise ConfigError(
                f"comm_radius ({self.comm_radius}) must be at least 2 * r_c ({2 * self.r_c})"
            )
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.C < 0 or self.C_prime < 0:
            raise ConfigError("C and C_prime must be nonnegative")
        if self.cost_unit_km <= 0:
            raise ConfigError(f"cost_unit_km must be positive, got {self.cost_unit_km}")

    def travel_cost(self, km: float) -> float:
        """C charged for travelling km to a pickup."""
        return self.C * km / self.cost_unit_km


@dataclass
class StopRule(_ConfigMixin):
    """When log-linear learning stops.

    Attributes:
        window: Unchanged rounds that count as converged (None: 3 * N)
        max_rounds: Hard cap on rounds (None: 500 * N)
    """
    window: Optional[int] = None
    max_rounds: Optional[int] = None

    def __post_init__(self) -> None:
        if self.window is not None and self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ConfigError(f"max_rounds must be >= 1, got {self.max_rounds}")

    def resolve(self, n_agents: int) -> Tuple[int, int]:
        """Return (window, max_rounds) for a game with ``n_agents`` players."""
        n = max(1, n_agents)
        window = self.window if self.window is not None else 3 * n
        max_rounds = self.max_rounds if self.max_rounds is not None else 500 * n
        return window, max(max_rounds, 1)


@dataclass
class LearningConfig(_ConfigMixin):
    """Discounting, adaptive-rate and solver constants.

    Attributes:
        gamma: Discount factor in (0, 1)
        zeta: Moving-average constant for the adaptive learning rate
        g_min: Floor below which the squared-gradient average counts as underflow
        eval_sweeps: Partial evaluation sweeps per policy-iteration step
        tol: Bellman residual tolerance for the warm-start solve
        max_iterations: Outer iteration cap for the warm-start solve
        sparse_actions: Drop moves to destinations never requested
    """
    gamma: float = 0.8
    zeta: float = 0.2
    g_min: float = 1e-12
    eval_sweeps: int = 10
    tol: float = 1e-8
    max_iterations: int = 10_000
    sparse_actions: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.zeta < 1.0:
            raise ConfigError(f"zeta must lie in (0, 1), got {self.zeta}")
        if self.eval_sweeps < 1:
            raise ConfigError(f"eval_sweeps must be >= 1, got {self.eval_sweeps}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")


@dataclass
class DriftSchedule(_ConfigMixin):
    """Time-varying multipliers on request rates and fares.

    A step schedule switches to the factors at ``start`` and stays there.
    A sinusoid oscillates between ``2 - factor`` and ``factor`` with the
    given period, starting at ``start``.

    Attributes:
        kind: none, step or sinusoid
        start: First tick affected
        period: Sinusoid period in ticks
        rate_factor: Multiplier (or peak multiplier) on request probabilities
        fare_factor: Multiplier (or peak multiplier) on fares
        cells: Pickup cells affected (None: every cell)
    """
    kind: DriftKind = DriftKind.NONE
    start: int = 0
    period: int = 100
    rate_factor: float = 1.0
    fare_factor: float = 1.0
    cells: Optional[List[int]] = None

    def __post_init__(self) -> None:
        self.kind = _coerce_enum(DriftKind, self.kind, "drift kind")
        if self.rate_factor < 0 or self.fare_factor < 0:
            raise ConfigError("Drift factors must be nonnegative")
        if self.kind == DriftKind.SINUSOID:
            if self.period < 1:
                raise ConfigError(f"Sinusoid period must be >= 1, got {self.period}")
            if self.rate_factor > 2 or self.fare_factor > 2:
                raise ConfigError("Sinusoid factors above 2 would make multipliers negative")
        if self.cells is not None:
            self.cells = [int(c) for c in self.cells]

    def multipliers(self, tick: int) -> Tuple[float, float]:
        """Return (rate multiplier, fare multiplier) in effect at ``tick``."""
        if self.kind == DriftKind.NONE or tick < self.start:
            return 1.0, 1.0
        if self.kind == DriftKind.STEP:
            return self.rate_factor, self.fare_factor
        s = math.sin(2.0 * math.pi * (tick - self.start) / self.period)
        return 1.0 + (self.rate_factor - 1.0) * s, 1.0 + (self.fare_factor - 1.0) * s

    def peak_rate_multiplier(self) -> float:
        """Largest rate multiplier the schedule can reach."""
        if self.kind == DriftKind.NONE:
            return 1.0
        if self.kind == DriftKind.STEP:
            return max(1.0, self.rate_factor)
        return 1.0 + abs(self.rate_factor - 1.0)


@dataclass
class SyntheticScenario(_ConfigMixin):
    """Generator parameters for synthetic demand.

    Request probabilities are either given explicitly (``rates``, an
    n_q x n_q matrix) or built as ``base_rate`` scaled by ``hot_factor`` for
    each endpoint listed in ``hot_cells``.

    Attributes:
        grid: Cell layout
        rates: Explicit per-pair request probability per tick
        base_rate: Per-pair probability when ``rates`` is not given
        hot_cells: Cells whose pairs get ``hot_factor`` per endpoint
        hot_factor: Rate multiplier for hot endpoints
        fare_base: Flag-fall fare
        fare_per_km: Fare per km of centroid distance
        fare_noise: Lognormal sigma of the multiplicative fare noise (mean 1)
        fare_boost: Extra fare multiplier keyed by dropoff cell
        duration_base: Fixed ticks per trip
        trip_speed: In-vehicle speed in km per tick
        motion: Motion-constraint factors M (None: all ones)
        drift: Non-stationary schedule
        windows: Ticks before the stream is exhausted (None: unbounded)
    """
    grid: GridConfig = field(default_factory=GridConfig)
    rates: Optional[List[List[float]]] = None
    base_rate: float = 0.002
    hot_cells: List[int] = field(default_factory=list)
    hot_factor: float = 1.0
    fare_base: float = 3.0
    fare_per_km: float = 2.0
    fare_noise: float = 0.0
    fare_boost: Dict[int, float] = field(default_factory=dict)
    duration_base: float = 1.0
    trip_speed: float = 0.5
    motion: Optional[List[List[float]]] = None
    drift: DriftSchedule = field(default_factory=DriftSchedule)
    windows: Optional[int] = None

    def __post_init__(self) -> None:
        self.grid = _from_mapping(GridConfig, self.grid, "scenario.grid")
        self.drift = _from_mapping(DriftSchedule, self.drift, "scenario.drift")
        self.fare_boost = {int(k): float(v) for k, v in self.fare_boost.items()}
        self.hot_cells = [int(c) for c in self.hot_cells]
        if self.base_rate < 0 or self.base_rate > 1:
            raise ConfigError(f"base_rate must lie in [0, 1], got {self.base_rate}")
        if self.hot_factor < 0:
            raise ConfigError(f"hot_factor must be nonnegative, got {self.hot_factor}")
        if self.fare_base < 0 or self.fare_per_km < 0 or self.fare_noise < 0:
            raise ConfigError("Fare parameters must be nonnegative")
        if any(v < 0 for v in self.fare_boost.values()):
            raise ConfigError("fare_boost multipliers must be nonnegative")
        if self.duration_base <= 0 or self.trip_speed <= 0:
            raise ConfigError("duration_base and trip_speed must be positive")
        if self.windows is not None and self.windows < 0:
            raise ConfigError(f"windows must be nonnegative, got {self.windows}")


@dataclass
class DemandSourceConfig(_ConfigMixin):
    """Demand source for a simulation.

    Attributes:
        kind: synthetic or file
        scenario: Synthetic generator parameters (kind=synthetic)
        trips: Trip file replayed by start tick (kind=file)
        grid: Cell layout for a trip file (kind=file)
        model: Saved DemandModel for the warm start (kind=file; None: estimate from trips)
        window: Estimation window length in ticks
    """
    kind: DemandKind = DemandKind.SYNTHETIC
    scenario: SyntheticScenario = field(default_factory=SyntheticScenario)
    trips: Optional[Path] = None
    grid: GridConfig = field(default_factory=GridConfig)
    model: Optional[Path] = None
    window: int = 1

    def __post_init__(self) -> None:
        self.kind = _coerce_enum(DemandKind, self.kind, "demand kind")
        self.scenario = _from_mapping(SyntheticScenario, self.scenario, "demand.scenario")
        self.grid = _from_mapping(GridConfig, self.grid, "demand.grid")
        self.trips = _coerce_path(self.trips)
        self.model = _coerce_path(self.model)
        if self.kind == DemandKind.FILE and self.trips is None:
            raise ConfigError("demand.kind 'file' requires demand.trips")
        if self.window < 1:
            raise ConfigError(f"demand.window must be >= 1, got {self.window}")

    @property
    def effective_grid(self) -> GridConfig:
        """Grid in use for this source."""
        return self.scenario.grid if self.kind == DemandKind.SYNTHETIC else self.grid


@dataclass
class SimConfig(_ConfigMixin):
    """Complete description of one simulation run.

    Attributes:
        n_agents: Fleet size
        horizon: Ticks to simulate
        seed: Seed for every random draw in the run
        policy: Dispatch/learning policy
        demand: Request source
        game: Assignment game parameters
        learning: Learning and warm-start constants
        stop: Log-linear learning stop rule
        speed: Empty-vehicle speed in km per tick
        request_ttl: Ticks an unserved request waits before expiring
        snapshot_every: Cadence of Q snapshots for tracked pairs
        tracked_pairs: (cell, destination) pairs whose Q values are traced
        record_graphs: Keep every tick's communication graph in the metrics
        warm_start: Saved QTable used instead of solving the MDP
    """
    n_agents: int = 20
    horizon: int = 1000
    seed: int = 0
    policy: Policy = Policy.DISTRIBUTED_SARSA
    demand: DemandSourceConfig = field(default_factory=DemandSourceConfig)
    game: GameConfig = field(default_factory=GameConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    stop: StopRule = field(default_factory=StopRule)
    speed: float = 0.5
    request_ttl: int = 5
    snapshot_every: int = 10
    tracked_pairs: List[Tuple[int, int]] = field(default_factory=list)
    record_graphs: bool = False
    warm_start: Optional[Path] = None

    def __post_init__(self) -> None:
        self.policy = _coerce_enum(Policy, self.policy, "policy")
        self.demand = _from_mapping(DemandSourceConfig, self.demand, "demand")
        self.game = _from_mapping(GameConfig, self.game, "game")
        self.learning = _from_mapping(LearningConfig, self.learning, "learning")
        self.stop = _from_mapping(StopRule, self.stop, "stop")
        self.tracked_pairs = [(int(p[0]), int(p[1])) for p in self.tracked_pairs]
        self.warm_start = _coerce_path(self.warm_start)
        if self.n_agents < 0:
            raise ConfigError(f"n_agents must be nonnegative, got {self.n_agents}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.speed <= 0:
            raise ConfigError(f"speed must be positive, got {self.speed}")
        if self.request_ttl < 1:
            raise ConfigError(f"request_ttl must be >= 1, got {self.request_ttl}")
        if self.snapshot_every < 1:
            raise ConfigError(f"snapshot_every must be >= 1, got {self.snapshot_every}")

    def flatten(self) -> Dict[str, Any]:
        """Return the config as a flat dict keyed by dotted paths."""
        return flatten_dict(self.to_dict())

    def with_overrides(self, overrides: Dict[str, Any]) -> "SimConfig":
        """Return a copy with dotted-path overrides applied.

        Raises:
            ConfigError: If a path does not name an existing setting
        """
        data = self.to_dict()
        for dotted, value in overrides.items():
            node = data
            parts = dotted.split(".")
            for part in parts[:-1]:
                if not isinstance(node.get(part), dict):
                    raise ConfigError(f"Unknown setting '{dotted}'")
                node = node[part]
            if parts[-1] not in node:
                raise ConfigError(f"Unknown setting '{dotted}'")
            node[parts[-1]] = value
        return SimConfig.from_dict(data)


def flatten_dict(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Flatten nested dicts into dotted keys; lists are kept as values."""
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict) and value:
            flat.update(flatten_dict(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


@dataclass
class SweepConfig(_ConfigMixin):
    """A grid of simulations compared against a baseline policy.

    Attributes:
        base: Settings shared by every run
        dimensions: Dotted setting path -> values to sweep over
        policies: Policies run at every sweep point
        seeds: Seeds run for every policy and sweep point
        baseline: Policy in the denominator of revenue ratios
    """
    base: SimConfig = field(default_factory=SimConfig)
    dimensions: Dict[str, List[Any]] = field(default_factory=dict)
    policies: List[Policy] = field(
        default_factory=lambda: [Policy.DISTRIBUTED_SARSA, Policy.CENTRALIZED_SARSA]
    )
    seeds: List[int] = field(default_factory=lambda: [0])
    baseline: Policy = Policy.CENTRALIZED_SARSA

    def __post_init__(self) -> None:
        self.base = _from_mapping(SimConfig, self.base, "base")
        self.policies = [_coerce_enum(Policy, p, "policy") for p in self.policies]
        self.baseline = _coerce_enum(Policy, self.baseline, "baseline")
        if self.baseline not in self.policies:
            raise ConfigError(f"Baseline policy '{self.baseline.value}' is not in policies")
        if not self.seeds:
            raise ConfigError("A sweep needs at least one seed")

    def expand(self) -> List[SimConfig]:
        """Return one SimConfig per (sweep point, policy, seed)."""
        points: List[Dict[str, Any]] = [{}]
        for key, values in self.dimensions.items():
            points = [{**p, key: v} for p in points for v in values]
        configs = []
        for point in points:
            for policy in self.policies:
                for seed in self.seeds:
                    configs.append(
                        self.base.with_overrides({**point, "policy": policy.value, "seed": seed})
                    )
        return configs


@dataclass
class BoundsConfig(_ConfigMixin):
    """Inputs for the verify-bounds command.

    The drift bound takes either literal (epsilon, delta, r_inf) or two saved
    demand models to measure them from. The consensus bound takes a saved
    graph schedule or a simulation config whose graphs are recorded.

    Attributes:
        gamma: Discount factor
        epsilon: Transition drift
        delta: Reward drift
        r_inf: Sup norm of rewards
        model_a: First DemandModel file
        model_b: Second DemandModel file
        schedule: Graph schedule CSV
        simulation: SimConfig JSON run to record graphs
        r_max: Bound on per-tick Q inputs (None with a simulation: measured)
        dr_max: Bound on per-tick gradient input changes
        warmup: Ticks of the schedule ignored by the bound
    """
    gamma: float = 0.8
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    r_inf: Optional[float] = None
    model_a: Optional[Path] = None
    model_b: Optional[Path] = None
    schedule: Optional[Path] = None
    simulation: Optional[Path] = None
    r_max: Optional[float] = 1.0
    dr_max: Optional[float] = 1.0
    warmup: int = 0

    def __post_init__(self) -> None:
        for name in ("model_a", "model_b", "schedule", "simulation"):
            setattr(self, name, _coerce_path(getattr(self, name)))
        if (self.model_a is None) != (self.model_b is None):
            raise ConfigError("model_a and model_b must be given together")
        if self.warmup < 0:
            raise ConfigError(f"warmup must be nonnegative, got {self.warmup}")

    @property
    def has_kappa_inputs(self) -> bool:
        """True when the drift bound can be evaluated."""
        literal = None not in (self.epsilon, self.delta, self.r_inf)
        return literal or self.model_a is not None

    @property
    def has_graph_inputs(self) -> bool:
        """True when the consensus bound can be evaluated."""
        return self.schedule is not None or self.simulation is not None


def load_json_config(path: Union[str, Path], cls: Type[C]) -> C:
    """Load a config dataclass from a JSON file.

    Relative paths inside the file are resolved against the file's directory.

    Args:
        path: JSON file
        cls: Target dataclass (SimConfig, SweepConfig, SyntheticScenario, ...)

    Returns:
        Parsed config

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigError: If the JSON is malformed or does not match ``cls``
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed JSON in {path}: {e}") from e
    _resolve_relative_paths(data, path.parent)
    return _from_mapping(cls, data, path.name)


_PATH_KEYS = frozenset(
    ("trips", "model", "warm_start", "model_a", "model_b", "schedule", "simulation")
)


def _resolve_relative_paths(node: Any, base: Path) -> None:
    if isinstance(node, dict):
        for key, value in node.items():
            if key in _PATH_KEYS and isinstance(value, str) and not Path(value).is_absolute():
                node[key] = str(base / value)
            else:
                _resolve_relative_paths(value, base)
    elif isinstance(node, list):
        for item in node:
            _resolve_relative_paths(item, base)
