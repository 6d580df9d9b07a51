"""Seeded synthetic demand.

Every tick, each ordered cell pair (i, j) independently produces one request
with probability L_t[i, j], where L_t is the scenario's rate matrix under the
drift schedule. Fares are a flag-fall plus a per-km charge on centroid
distance, scaled by the dropoff boost, the drift fare multiplier, and a
mean-one lognormal noise factor. Durations are deterministic per pair.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from ..config import SyntheticScenario
from ..exceptions import ConfigError
from .estimate import DemandModel
from .geometry import GridGeometry
from .trips import TripRecord

logger = logging.getLogger(__name__)


def rate_matrix(scenario: SyntheticScenario) -> np.ndarray:
    """Return the base request probabilities of a scenario.

    Raises:
        ConfigError: If explicit rates have the wrong shape or leave [0, 1]
    """
    n_q = scenario.grid.n_q
    if scenario.rates is not None:
        rates = np.asarray(scenario.rates, dtype=float)
        if rates.shape != (n_q, n_q):
            raise ConfigError(f"rates has shape {rates.shape}, grid needs {(n_q, n_q)}")
    else:
        weight = np.ones(n_q)
        for cell in scenario.hot_cells:
            if not 0 <= cell < n_q:
                raise ConfigError(f"hot cell {cell} is outside the {n_q}-cell grid")
            weight[cell] = scenario.hot_factor
        rates = scenario.base_rate * np.outer(weight, weight)
    if np.any(rates < 0) or np.any(rates > 1):
        raise ConfigError("Request rates must lie in [0, 1]")
    return rates


def _check_rates(rates: np.ndarray, scenario: SyntheticScenario) -> None:
    """Reject rates whose rows could leave a cell with probability above 1."""
    peak = rates.copy()
    factor = scenario.drift.peak_rate_multiplier()
    rows = scenario.drift.cells if scenario.drift.cells is not None else range(len(rates))
    for i in rows:
        peak[i] *= factor
    if np.any(peak > 1):
        raise ConfigError(f"Drifted request rates exceed 1 (peak multiplier {factor})")
    mass = peak.sum(axis=1) - np.diag(peak)
    bad = np.flatnonzero(mass > 1.0)
    if bad.size:
        raise ConfigError(
            f"Cell {int(bad[0])}: departure rates sum to {mass[bad[0]]:.4f} > 1"
            + (" at peak drift" if factor != 1.0 else "")
        )


class TripStream:
    """Tick-by-tick request generator for one scenario and seed.

    Single consumer; build one stream per seed for parallel use.
    """

    def __init__(
        self,
        scenario: SyntheticScenario,
        geometry: GridGeometry,
        rates: np.ndarray,
        mean_fares: np.ndarray,
        durations: np.ndarray,
        seed: int,
    ):
        self.scenario = scenario
        self.geometry = geometry
        self.rates = rates
        self.mean_fares = mean_fares
        self.durations = durations
        self.seed = seed
        self.tick = 0
        self._rng = np.random.default_rng(seed)
        n_q = geometry.n_q
        self._drift_rows = np.zeros(n_q, dtype=bool)
        if scenario.drift.cells is None:
            self._drift_rows[:] = True
        else:
            self._drift_rows[scenario.drift.cells] = True

    @property
    def exhausted(self) -> bool:
        limit = self.scenario.windows
        return limit is not None and self.tick >= limit

    def current_rates(self) -> np.ndarray:
        """Request probabilities in effect at the current tick."""
        rate_mult, _ = self.scenario.drift.multipliers(self.tick)
        if rate_mult == 1.0:
            return self.rates
        scaled = self.rates.copy()
        scaled[self._drift_rows] *= rate_mult
        return scaled

    def next_window(self) -> Optional[List[TripRecord]]:
        """Generate this tick's requests and advance, or None once exhausted."""
        if self.exhausted:
            return None
        tick = self.tick
        _, fare_mult = self.scenario.drift.multipliers(tick)
        sigma = self.scenario.fare_noise
        draws = self._rng.random(self.rates.shape)
        batch = []
        for i, j in np.argwhere(draws < self.current_rates()):
            fare = self.mean_fares[i, j]
            if self._drift_rows[i]:
                fare *= fare_mult
            if sigma > 0:
                fare *= self._rng.lognormal(mean=-0.5 * sigma * sigma, sigma=sigma)
            batch.append(
                TripRecord(
                    pickup=int(i),
                    dropoff=int(j),
                    start_time=tick,
                    duration=float(self.durations[i, j]),
                    fare=float(fare),
                )
            )
        self.tick += 1
        return batch

    def sample(self, n_windows: int) -> List[TripRecord]:
        """Generate ``n_windows`` ticks and return every request in order."""
        records: List[TripRecord] = []
        for _ in range(n_windows):
            batch = self.next_window()
            if batch is None:
                break
            records.extend(batch)
        return records


def synth_demand(
    scenario: SyntheticScenario,
    seed: int,
) -> Tuple[DemandModel, TripStream]:
    """Build the true demand model of a scenario and a seeded request stream.

    The model is the one ``estimate_demand`` converges to on the stream
    before any drift takes effect, including the idle-window pooling of
    D[i, i].

    Args:
        scenario: Generator parameters
        seed: Seed of the stream

    Returns:
        (DemandModel, TripStream)

    Raises:
        ConfigError: If the rates could make a cell's departure probability exceed 1
    """
    geometry = GridGeometry.from_config(scenario.grid)
    n_q = geometry.n_q
    rates = rate_matrix(scenario)
    _check_rates(rates, scenario)

    dist = geometry.distance_matrix()
    boost = np.ones(n_q)
    for cell, factor in scenario.fare_boost.items():
        if not 0 <= cell < n_q:
            raise ConfigError(f"fare_boost cell {cell} is outside the {n_q}-cell grid")
        boost[cell] = factor
    mean_fares = (scenario.fare_base + scenario.fare_per_km * dist) * boost[None, :]
    durations = scenario.duration_base + dist / scenario.trip_speed

    if scenario.motion is not None:
        motion = np.asarray(scenario.motion, dtype=float)
        if motion.shape != (n_q, n_q):
            raise ConfigError(f"motion has shape {motion.shape}, grid needs {(n_q, n_q)}")
    else:
        motion = np.ones((n_q, n_q))

    reward = motion * mean_fares / durations
    D = reward.copy()
    # A stay sample is a served i->i request or a window with no request from i
    stay_rate = np.diag(rates)
    idle_prob = np.prod(1.0 - rates, axis=1)
    denom = stay_rate + idle_prob
    D[np.diag_indices(n_q)] = np.divide(
        stay_rate * np.diag(reward), denom, out=np.zeros(n_q), where=denom > 0
    )

    model = DemandModel(n_q, rates.copy(), D, motion)
    stream = TripStream(scenario, geometry, rates, mean_fares, durations, seed)
    logger.debug(
        f"Synthetic scenario: {n_q} cells, {rates.sum():.3f} expected requests per tick"
    )
    return model, stream
