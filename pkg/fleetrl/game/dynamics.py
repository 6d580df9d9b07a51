"""Potential-game task assignment with binary log-linear learning.

The potential H of a profile sums each player's action value h, counting a
task once: when several players hold the same task it goes to the holder
closest to its pickup (ties: lower player index), and a player contributes
h only if it wins every task in its action. A player's utility is its
marginal contribution, H with its action minus H with the null action,
which makes H an exact potential.

Each round of binary log-linear learning picks one player uniformly, draws
one trial action uniformly from its set and switches with probability

    exp(J_trial / tau) / (exp(J_current / tau) + exp(J_trial / tau))
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..config import GameConfig, StopRule
from ..demand.geometry import Point, distance
from .tasks import NULL_ACTION, Action, Profile, Task, null_profile
from .utility import UtilityModel, available_tasks

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-9


@dataclass
class AssignmentGame:
    """One game instance: players, tasks, action sets and action values.

    Attributes:
        positions: Player positions in km, one row per player
        tasks: Tasks by id
        action_sets: Available actions per player, null first
        values: h per player and action
        agent_ids: Fleet id of each player (ascending)
    """
    positions: np.ndarray
    tasks: Dict[int, Task]
    action_sets: List[List[Action]]
    values: List[Dict[Action, float]]
    agent_ids: List[int] = field(default_factory=list)
    _pickup_dist: Dict[Tuple[int, int], float] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        n = len(self.positions)
        if len(self.action_sets) != n or len(self.values) != n:
            raise ValueError("positions, action_sets and values must have one entry per player")
        if not self.agent_ids:
            self.agent_ids = list(range(n))

    @property
    def n_players(self) -> int:
        return len(self.action_sets)

    def h(self, player: int, action: Action) -> float:
        if not action:
            return 0.0
        return self.values[player][action]

    def pickup_distance(self, player: int, task_id: int) -> float:
        key = (player, task_id)
        if key not in self._pickup_dist:
            self._pickup_dist[key] = distance(self.positions[player], self.tasks[task_id].pickup_point)
        return self._pickup_dist[key]

    def winner(self, task_id: int, holders: Iterable[int]) -> int:
        """Holder credited with a task: closest to its pickup, then lowest index."""
        return min(holders, key=lambda i: (self.pickup_distance(i, task_id), i))


def build_game(
    positions: Sequence[Point],
    tasks: Sequence[Task],
    cfg: GameConfig,
    utility: UtilityModel,
    agent_ids: Optional[Sequence[int]] = None,
) -> AssignmentGame:
    """Sense tasks for every player and value its actions."""
    by_id = {t.id: t for t in tasks}
    ids = list(agent_ids) if agent_ids is not None else list(range(len(positions)))
    action_sets = []
    values = []
    for agent_id, pos in zip(ids, positions):
        point = (float(pos[0]), float(pos[1]))
        actions = available_tasks(point, tasks, cfg)
        action_sets.append(actions)
        values.append(utility.action_values(agent_id, point, actions, by_id))
    return AssignmentGame(np.asarray(positions, dtype=float), by_id, action_sets, values, ids)


def _wins_all(game: AssignmentGame, player: int, profile: Profile) -> bool:
    for task_id in profile[player]:
        holders = [k for k, other in enumerate(profile) if task_id in other]
        if game.winner(task_id, holders) != player:
            return False
    return True


def _contribution(game: AssignmentGame, player: int, profile: Profile) -> float:
    action = profile[player]
    if not action or not _wins_all(game, player, profile):
        return 0.0
    return game.h(player, action)


def potential(game: AssignmentGame, profile: Profile) -> float:
    """H of a profile under the conflict rule."""
    return sum(_contribution(game, i, profile) for i in range(len(profile)))


def _with(profile: Profile, player: int, action: Action) -> Profile:
    return profile[:player] + (action,) + profile[player + 1:]


def wlu(game: AssignmentGame, player: int, profile: Profile, candidate: Action) -> float:
    """Marginal contribution of ``candidate`` for ``player`` against the others' actions.

    Only players sharing a task with ``candidate`` can change their
    contribution, so only they are evaluated.
    """
    if not candidate:
        return 0.0
    taken = set(candidate)
    involved = [player] + [
        k for k, other in enumerate(profile) if k != player and taken.intersection(other)
    ]
    with_c = _with(profile, player, candidate)
    without = _with(profile, player, NULL_ACTION)
    gain = sum(_contribution(game, k, with_c) for k in involved)
    base = sum(_contribution(game, k, without) for k in involved)
    return gain - base


def switch_probability(j_current: float, j_trial: float, tau: float) -> float:
    """Probability of moving to the trial action at temperature ``tau``."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    d = (j_trial - j_current) / tau
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


class BllStep(NamedTuple):
    """Outcome of one log-linear learning round."""
    profile: Profile
    player: Optional[int]
    switched: bool
    delta: float


def bll_round(game: AssignmentGame, profile: Profile, rng: np.random.Generator, tau: float) -> BllStep:
    """Let one uniformly chosen player consider one uniformly drawn trial action.

    Returns:
        BllStep with the new profile and the change in potential
    """
    if game.n_players == 0:
        return BllStep(profile, None, False, 0.0)
    player = int(rng.integers(game.n_players))
    options = game.action_sets[player]
    trial = options[int(rng.integers(len(options)))]
    u = float(rng.random())
    current = profile[player]
    if trial == current:
        return BllStep(profile, player, False, 0.0)
    j_cur = wlu(game, player, profile, current)
    j_trial = wlu(game, player, profile, trial)
    if u < switch_probability(j_cur, j_trial, tau):
        return BllStep(_with(profile, player, trial), player, True, j_trial - j_cur)
    return BllStep(profile, player, False, 0.0)


def resolve_conflicts(game: AssignmentGame, profile: Profile) -> Profile:
    """Null every player that does not win all tasks of its action, then re-offer.

    A nulled player, in index order, takes its best action among those whose
    tasks nobody holds any more, if that action is worth more than null. A
    pooled holder that lost one ride can so keep the ride it won, or any
    other free ride. The potential never decreases.
    """
    resolved = [
        action if _wins_all(game, i, profile) else NULL_ACTION for i, action in enumerate(profile)
    ]
    held = {task_id for action in resolved for task_id in action}
    for i, action in enumerate(profile):
        if not action or resolved[i]:
            continue
        free = [a for a in game.action_sets[i] if a and held.isdisjoint(a)]
        if not free:
            continue
        best = max(free, key=lambda a: game.h(i, a))
        if game.h(i, best) > 0.0:
            resolved[i] = best
            held.update(best)
            logger.debug(f"Player {i} re-offered {best} after losing {action}")
    return tuple(resolved)


@dataclass
class AssignmentResult:
    """Outcome of one assignment game.

    Attributes:
        profile: Conflict-free profile, one action per player
        converged: True if the stop window was reached before the round cap
        rounds: Rounds played
        potential: H of ``profile``
        potential_trace: H after every round
        agent_ids: Fleet id of each player
    """
    profile: Profile
    converged: bool
    rounds: int
    potential: float
    potential_trace: List[float] = field(default_factory=list)
    agent_ids: List[int] = field(default_factory=list)

    def assignments(self) -> Dict[int, Action]:
        """Non-null actions keyed by fleet agent id."""
        return {aid: a for aid, a in zip(self.agent_ids, self.profile) if a}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "profile": [list(a) for a in self.profile],
            "converged": self.converged,
            "rounds": self.rounds,
            "potential": self.potential,
            "agent_ids": list(self.agent_ids),
        }


def run_assignment(
    game: AssignmentGame,
    cfg: GameConfig,
    stop: Optional[StopRule] = None,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> AssignmentResult:
    """Play log-linear learning from the all-null profile until the stop rule.

    The game converges once no action changed for ``window`` consecutive
    rounds. At the round cap, the best profile seen is returned instead and
    flagged as not converged. Losing holders are nulled, then
    re-offered the tasks left free (see resolve_conflicts).

    Args:
        game: Game instance
        cfg: Game constants (tau)
        stop: Stop rule (default: 3N window, 500N cap)
        rng: Random generator; built from ``seed`` when omitted
        seed: Seed used when no generator is given
    """
    stop = stop or StopRule()
    window, max_rounds = stop.resolve(game.n_players)
    rng = rng if rng is not None else np.random.default_rng(seed)

    profile = null_profile(game.n_players)
    phi = 0.0
    best_phi, best_profile = phi, profile
    trace: List[float] = []
    unchanged = 0
    converged = False
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        step = bll_round(game, profile, rng, cfg.tau)
        if step.switched:
            profile = step.profile
            phi += step.delta
            unchanged = 0
            if phi > best_phi:
                best_phi, best_profile = phi, profile
        else:
            unchanged += 1
        trace.append(phi)
        if unchanged >= window:
            converged = True
            break

    chosen = profile if converged else best_profile
    final = resolve_conflicts(game, chosen)
    result = AssignmentResult(final, converged, rounds, potential(game, final), trace, list(game.agent_ids))
    if not converged:
        logger.warning(
            f"Assignment did not settle in {max_rounds} rounds; using best profile "
            f"(potential {result.potential:.4g})"
        )
    else:
        logger.debug(f"Assignment settled after {rounds} rounds, potential {result.potential:.4g}")
    return result


def potential_identity_check(
    game: AssignmentGame,
    profile: Profile,
    player: int,
    action_a: Action,
    action_b: Action,
    tol: float = IDENTITY_TOL,
) -> bool:
    """Check that switching a player from a to b changes H exactly as it changes its utility."""
    u_a = _with(profile, player, action_a)
    u_b = _with(profile, player, action_b)
    d_phi = potential(game, u_b) - potential(game, u_a)
    d_j = wlu(game, player, u_b, action_b) - wlu(game, player, u_a, action_a)
    return abs(d_phi - d_j) <= tol


def brute_force_optimum(game: AssignmentGame) -> Tuple[float, Profile]:
    """Maximize H over every profile (small games only)."""
    best_phi = -math.inf
    best: Profile = null_profile(game.n_players)
    for combo in itertools.product(*game.action_sets):
        phi = potential(game, tuple(combo))
        if phi > best_phi:
            best_phi, best = phi, tuple(combo)
    if game.n_players == 0:
        best_phi = 0.0
    return best_phi, resolve_conflicts(game, best)
