"""Centralized SARSA with a per-pair adaptive learning rate.

For every state-action pair two exponential moving averages are kept, f of
the loss gradient and g of its square. The learning rate f^2 / g is the
ratio of squared mean to second moment of the gradient: close to 1 when the
target moves consistently (the environment changed) and close to 0 when the
gradient is mostly noise.
"""

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from ..mdp.qtable import QTable

logger = logging.getLogger(__name__)

DEFAULT_ZETA = 0.2
DEFAULT_G_MIN = 1e-12


@dataclass(frozen=True)
class SarsaUpdateEvent:
    """One completed transition.

    Attributes:
        state: Cell the action was taken in
        action: Destination cell of the action
        successor: Cell reached (equals ``action``)
        successor_action: Destination chosen next at ``successor``; None if none was available
        reward: Realized reward
    """
    state: int
    action: int
    successor: int
    successor_action: Optional[int]
    reward: float

    def __post_init__(self) -> None:
        if self.successor != self.action:
            raise ValueError(
                f"Successor {self.successor} does not match the action's destination {self.action}"
            )


@dataclass
class AdaptiveRateState:
    """Moving averages behind the adaptive learning rate.

    Arrays are updated in place so a state can wrap rows of a larger matrix.

    Attributes:
        f: Moving average of the loss gradient per pair
        g: Moving average of the squared gradient per pair
        zeta: Moving-average constant in (0, 1)
        g_min: Below this, g counts as underflow and the rate is forced to 0
    """
    f: np.ndarray
    g: np.ndarray
    zeta: float = DEFAULT_ZETA
    g_min: float = DEFAULT_G_MIN

    def __post_init__(self) -> None:
        if not 0.0 < self.zeta < 1.0:
            raise ValueError(f"zeta must lie in (0, 1), got {self.zeta}")

    @classmethod
    def initial(cls, size: int, zeta: float = DEFAULT_ZETA, g_min: float = DEFAULT_G_MIN) -> "AdaptiveRateState":
        """f = g = 1 everywhere, so every pair starts at rate 1."""
        return cls(np.ones(size), np.ones(size), zeta, g_min)


class RateUpdate(NamedTuple):
    """Learning rate produced by ``update_rate``."""
    alpha: float
    underflow: bool


class StepRecord(NamedTuple):
    """What one SARSA step did."""
    pair: int
    gradient: float
    alpha: float
    underflow: bool


def rate_from_moments(f: float, g: float, g_min: float) -> RateUpdate:
    """Return f^2 / g clamped to [0, 1], or 0 with the underflow flag."""
    if not g >= g_min:
        return RateUpdate(0.0, True)
    return RateUpdate(min(max(f * f / g, 0.0), 1.0), False)


def update_rate(rs: AdaptiveRateState, pair: int, grad: float, rho: int) -> RateUpdate:
    """Fold a gradient sample into the moving averages and return the rate.

    With ``rho == 0`` nothing is updated and the current rate is returned.

    Args:
        rs: Rate state, updated in place
        pair: Flat state-action offset
        grad: Loss gradient sample
        rho: 1 if the pair was observed this step, else 0

    Returns:
        RateUpdate(alpha, underflow)
    """
    if rho not in (0, 1):
        raise ValueError(f"rho must be 0 or 1, got {rho}")
    if rho:
        rs.f[pair] = rs.f[pair] + rs.zeta * (grad - rs.f[pair])
        rs.g[pair] = rs.g[pair] + rs.zeta * (grad * grad - rs.g[pair])
    update = rate_from_moments(float(rs.f[pair]), float(rs.g[pair]), rs.g_min)
    if update.underflow:
        logger.debug(f"Gradient second moment underflow at pair {pair}; rate forced to 0")
    return update


def loss_gradient(q: QTable, ev: SarsaUpdateEvent, gamma: float) -> float:
    """Gradient of 0.5 * (Q(i, a) - target)^2 with respect to Q(i, a).

    The target is R + gamma * Q(j, a') for the successor action a' actually
    chosen at j, or the best action at j when none was chosen.

    Raises:
        IndexError: If a pair is not in the table's action index
    """
    q_sa = q.values[q.index.pair(ev.state, ev.action)]
    if ev.successor_action is None:
        q_next = q.best_value(ev.successor)
    else:
        q_next = q.values[q.index.pair(ev.successor, ev.successor_action)]
    return float(q_sa - ev.reward - gamma * q_next)


def sarsa_step(q: QTable, rs: AdaptiveRateState, ev: SarsaUpdateEvent, gamma: float) -> StepRecord:
    """Apply one SARSA update with the adaptive rate.

    The rate is refreshed with this event's gradient first, then
    Q(i, a) moves by alpha times the temporal difference. ``q`` and ``rs``
    are updated in place; no other entry changes.

    Returns:
        StepRecord of the pair, gradient and rate used
    """
    pair = q.index.pair(ev.state, ev.action)
    grad = loss_gradient(q, ev, gamma)
    rate = update_rate(rs, pair, grad, 1)
    q.values[pair] = q.values[pair] + rate.alpha * -grad
    return StepRecord(pair, grad, rate.alpha, rate.underflow)


class CentralizedLearner:
    """One shared Q table updated by every agent's transitions.

    Args:
        q: Warm-start table; it is copied
        gamma: Discount factor
        zeta: Moving-average constant
        g_min: Underflow floor for the squared-gradient average
    """

    def __init__(self, q: QTable, gamma: float, zeta: float = DEFAULT_ZETA, g_min: float = DEFAULT_G_MIN):
        self.q = q.copy()
        self.gamma = gamma
        self.rates = AdaptiveRateState.initial(q.index.size, zeta, g_min)
        self.steps = 0

    def observe(self, ev: SarsaUpdateEvent) -> StepRecord:
        """Apply one transition and return what changed."""
        self.steps += 1
        return sarsa_step(self.q, self.rates, ev, self.gamma)

    def alpha(self, pair: int) -> float:
        """Current learning rate of a pair."""
        return rate_from_moments(float(self.rates.f[pair]), float(self.rates.g[pair]), self.rates.g_min).alpha


def optimal_rate(mean_grad: float, var_grad: float) -> float:
    """Rate the moving averages estimate: m^2 / (m^2 + s^2)."""
    second = mean_grad * mean_grad + var_grad
    return mean_grad * mean_grad / second if second > 0 else 0.0


def alpha_error_bound(delta_f: float, delta_g: float, f_star: float, g_star: float) -> float:
    """Upper bound on |alpha_hat - alpha*| from moving-average estimation errors.

    Args:
        delta_f: Bound on |f_hat - f*|
        delta_g: Bound on |g_hat - g*|
        f_star: True gradient mean
        g_star: True gradient second moment

    Returns:
        The bound, or inf when g* does not exceed delta_g
    """
    if g_star <= delta_g:
        return float("inf")
    return abs((delta_f * delta_f + 2.0 * delta_f * abs(f_star)) / (g_star * (g_star - delta_g)))


@dataclass
class GradientVarianceMonitor:
    """Compares early and recent gradient variance per pair.

    Diagnoses whether the gradient noise of a pair looks time-invariant. Each
    pair keeps its first ``window`` samples and a sliding buffer of its last
    ``window`` samples; learning is never affected.

    Attributes:
        window: Samples per comparison window
    """
    window: int = 50
    _early: Dict[int, List[float]] = field(default_factory=lambda: defaultdict(list))
    _late: Dict[int, Deque[float]] = field(default_factory=dict)
    _counts: Dict[int, int] = field(default_factory=lambda: defaultdict(int))

    def observe(self, pair: int, grad: float) -> None:
        self._counts[pair] += 1
        if len(self._early[pair]) < self.window:
            self._early[pair].append(grad)
            return
        buf = self._late.setdefault(pair, deque(maxlen=self.window))
        buf.append(grad)

    def drift(self, pair: int) -> Optional[float]:
        """Late-window variance minus early-window variance, once both are full."""
        late = self._late.get(pair)
        if late is None or len(late) < self.window:
            return None
        return float(np.var(np.asarray(late)) - np.var(np.asarray(self._early[pair])))

    def report(self) -> pd.DataFrame:
        """One row per pair with full windows: samples, both variances, drift."""
        rows = []
        for pair in sorted(self._late):
            d = self.drift(pair)
            if d is None:
                continue
            rows.append(
                {
                    "pair": pair,
                    "samples": self._counts[pair],
                    "var_early": float(np.var(self._early[pair])),
                    "var_late": float(np.var(np.asarray(self._late[pair]))),
                    "drift": d,
                }
            )
        return pd.DataFrame(rows, columns=["pair", "samples", "var_early", "var_late", "drift"])
