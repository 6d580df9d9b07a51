"""Warm-start solvers: modified policy iteration and a value-iteration oracle.

Models built from demand data are solved cell by cell. For each cell l the
agent decides only at l, over every move in A(l); in every other cell it
follows customers through the single-action rows. The values of the other
cells therefore depend on the decision at l, and Q(l, .) is read off the
solution of that cell's problem. Models without single-action rows are
solved as ordinary finite MDPs.

Both solvers stop once the value update is below ``tol * (1 - gamma) / 2``,
which keeps the Bellman residual of the returned Q below ``tol``.
"""

import logging
from typing import Iterator, Tuple

import numpy as np

from ..exceptions import ConvergenceError
from .model import MdpModel
from .qtable import QTable, RankedPolicy

logger = logging.getLogger(__name__)

DEFAULT_EVAL_SWEEPS = 10
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERATIONS = 10_000


def _segment_max(q: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return np.maximum.reduceat(q, offsets[:-1])


def _segment_argmax(q: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Flat index of the first maximum in each cell segment."""
    return np.array(
        [offsets[c] + int(np.argmax(q[offsets[c]:offsets[c + 1]])) for c in range(len(offsets) - 1)]
    )


def _stop_threshold(tol: float, gamma: float) -> float:
    return tol * (1.0 - gamma) / 2.0


def _mpi_full(
    model: MdpModel,
    eval_sweeps: int,
    tol: float,
    max_iterations: int,
) -> Tuple[np.ndarray, int, float]:
    """Modified policy iteration over every state at once."""
    gamma = model.gamma
    r = model.expected_rewards()
    P = model.P
    offsets = model.index.offsets
    threshold = _stop_threshold(tol, gamma)
    V = np.zeros(model.n_q)
    residual = np.inf
    for iteration in range(1, max_iterations + 1):
        q = r + gamma * (P @ V)
        TV = _segment_max(q, offsets)
        residual = float(np.max(np.abs(TV - V)))
        if residual <= threshold:
            return q, iteration, residual
        policy = _segment_argmax(q, offsets)
        r_pi, P_pi = r[policy], P[policy]
        V = TV
        for _ in range(eval_sweeps):
            V = r_pi + gamma * (P_pi @ V)
    raise ConvergenceError("Policy iteration did not converge", residual, max_iterations)


def _mpi_cell(
    model: MdpModel,
    cell: int,
    V: np.ndarray,
    eval_sweeps: int,
    tol: float,
    max_iterations: int,
) -> Tuple[np.ndarray, np.ndarray, int, float]:
    """Modified policy iteration for the problem where only ``cell`` decides."""
    assert model.P_bar is not None
    gamma = model.gamma
    sl = model.index.cell_slice(cell)
    r_l = model.expected_rewards()[sl]
    P_l = model.P[sl]
    r_bar = model.aggregate_rewards()
    P_bar = model.P_bar
    threshold = _stop_threshold(tol, gamma)
    residual = np.inf
    for iteration in range(1, max_iterations + 1):
        q_l = r_l + gamma * (P_l @ V)
        TV = r_bar + gamma * (P_bar @ V)
        TV[cell] = np.max(q_l)
        residual = float(np.max(np.abs(TV - V)))
        if residual <= threshold:
            return q_l, V, iteration, residual
        k = int(np.argmax(q_l))
        V = TV
        for _ in range(eval_sweeps):
            nxt = r_bar + gamma * (P_bar @ V)
            nxt[cell] = r_l[k] + gamma * (P_l[k] @ V)
            V = nxt
    raise ConvergenceError(f"Policy iteration for cell {cell} did not converge", residual, max_iterations)


def solve_mpi(
    mdp: MdpModel,
    eval_sweeps: int = DEFAULT_EVAL_SWEEPS,
    tol: float = DEFAULT_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> Tuple[QTable, RankedPolicy]:
    """Solve an MDP by modified policy iteration.

    Args:
        mdp: Model to solve
        eval_sweeps: Partial policy-evaluation sweeps per improvement step
        tol: Bound on the Bellman residual of the returned Q
        max_iterations: Improvement steps allowed (per cell for demand-built models)

    Returns:
        (QTable, RankedPolicy)

    Raises:
        ValueError: If eval_sweeps < 1 or tol <= 0
        ConvergenceError: If the iteration cap is reached
    """
    if eval_sweeps < 1:
        raise ValueError(f"eval_sweeps must be >= 1, got {eval_sweeps}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")

    if not mdp.has_aggregate:
        values, iterations, residual = _mpi_full(mdp, eval_sweeps, tol, max_iterations)
    else:
        values = np.empty(mdp.index.size)
        V = np.zeros(mdp.n_q)
        iterations, residual = 0, 0.0
        for cell in range(mdp.n_q):
            # Neighboring problems differ in one row, so the last V is a good start
            q_l, V, its, res = _mpi_cell(mdp, cell, V, eval_sweeps, tol, max_iterations)
            values[mdp.index.cell_slice(cell)] = q_l
            iterations += its
            residual = max(residual, res)

    q = QTable(mdp.index, values, mdp.gamma)
    logger.info(
        f"Solved {mdp.n_q}-cell MDP by policy iteration: {iterations} iterations, "
        f"final value change {residual:.2e}"
    )
    return q, RankedPolicy.from_qtable(q)


def solve_value_iteration(
    mdp: MdpModel,
    tol: float = 1e-10,
    max_iterations: int = 1_000_000,
) -> QTable:
    """Solve an MDP by plain value iteration (reference solver).

    Raises:
        ConvergenceError: If the iteration cap is reached
    """
    gamma = mdp.gamma
    threshold = _stop_threshold(tol, gamma)
    r = mdp.expected_rewards()
    offsets = mdp.index.offsets

    if not mdp.has_aggregate:
        V = np.zeros(mdp.n_q)
        for _ in range(max_iterations):
            q = r + gamma * (mdp.P @ V)
            TV = _segment_max(q, offsets)
            if np.max(np.abs(TV - V)) <= threshold:
                return QTable(mdp.index, q, gamma)
            V = TV
        raise ConvergenceError("Value iteration did not converge", float(np.max(np.abs(TV - V))), max_iterations)

    assert mdp.P_bar is not None
    r_bar = mdp.aggregate_rewards()
    values = np.empty(mdp.index.size)
    for cell in range(mdp.n_q):
        sl = mdp.index.cell_slice(cell)
        V = np.zeros(mdp.n_q)
        for _ in range(max_iterations):
            q_l = r[sl] + gamma * (mdp.P[sl] @ V)
            TV = r_bar + gamma * (mdp.P_bar @ V)
            TV[cell] = np.max(q_l)
            if np.max(np.abs(TV - V)) <= threshold:
                break
            V = TV
        else:
            raise ConvergenceError(
                f"Value iteration for cell {cell} did not converge",
                float(np.max(np.abs(TV - V))),
                max_iterations,
            )
        values[sl] = q_l
    return QTable(mdp.index, values, gamma)


def _cell_values(mdp: MdpModel, q: QTable) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield, per cell l, the state values implied by Q when only l decides."""
    assert mdp.P_bar is not None
    gamma = mdp.gamma
    r_bar = mdp.aggregate_rewards()
    n = mdp.n_q
    for cell in range(n):
        others = np.array([k for k in range(n) if k != cell])
        v_cell = q.best_value(cell)
        V = np.empty(n)
        V[cell] = v_cell
        A = np.eye(len(others)) - gamma * mdp.P_bar[np.ix_(others, others)]
        b = r_bar[others] + gamma * mdp.P_bar[others, cell] * v_cell
        V[others] = np.linalg.solve(A, b)
        yield cell, V


def bellman_backup(mdp: MdpModel, q: QTable) -> np.ndarray:
    """Apply one Bellman optimality backup to ``q`` and return the new vector."""
    r = mdp.expected_rewards()
    if not mdp.has_aggregate:
        V = _segment_max(q.values, mdp.index.offsets)
        return r + mdp.gamma * (mdp.P @ V)
    out = np.empty_like(q.values)
    for cell, V in _cell_values(mdp, q):
        sl = mdp.index.cell_slice(cell)
        out[sl] = r[sl] + mdp.gamma * (mdp.P[sl] @ V)
    return out


def bellman_residual(mdp: MdpModel, q: QTable) -> float:
    """Return max |Q - T(Q)| for the operator ``solve_mpi`` solves."""
    return float(np.max(np.abs(q.values - bellman_backup(mdp, q))))
