"""Non-stationarity bounds between two MDP models.

If the true transition and reward models drift from the ones used for the
warm start by at most epsilon and delta (elementwise max norm), the learned
Q sequence stays asymptotically within kappa of the warm-start solution:

    d     = epsilon * gamma * ||R||_inf / (1 - gamma)^2 + delta / (1 - gamma)
    kappa = 4 * d / (1 - gamma)
"""

from typing import NamedTuple

import numpy as np

from ..exceptions import ShapeMismatchError
from .model import MdpModel


class KappaBound(NamedTuple):
    """Drift bound (d) and asymptotic approximation radius (kappa)."""
    d: float
    kappa: float


class ModelDrift(NamedTuple):
    """Elementwise max-norm distance between two models' P and R."""
    epsilon: float
    delta: float


def kappa_bound(epsilon: float, delta: float, gamma: float, r_inf: float) -> KappaBound:
    """Evaluate the drift bound.

    Args:
        epsilon: Max-norm transition drift
        delta: Max-norm reward drift
        gamma: Discount factor in (0, 1)
        r_inf: Sup norm of the reward model

    Returns:
        KappaBound(d, kappa)

    Raises:
        ValueError: If gamma is outside (0, 1) or an input is negative
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    for name, value in (("epsilon", epsilon), ("delta", delta), ("r_inf", r_inf)):
        if value < 0:
            raise ValueError(f"{name} must be nonnegative, got {value}")
    d = epsilon * gamma * r_inf / (1.0 - gamma) ** 2 + delta / (1.0 - gamma)
    return KappaBound(d=d, kappa=4.0 * d / (1.0 - gamma))


def reward_sup_norm(mdp: MdpModel) -> float:
    """Return ||R||_inf over the chosen-action and single-action rewards."""
    norm = float(np.max(np.abs(mdp.R))) if mdp.R.size else 0.0
    if mdp.R_bar is not None:
        norm = max(norm, float(np.max(np.abs(mdp.R_bar))))
    return norm


def model_drift(a: MdpModel, b: MdpModel) -> ModelDrift:
    """Measure how far two models with the same structure are apart.

    Both norms are the elementwise max over the flattened tensors, taken
    over the chosen-action rows and, when present, the single-action rows.

    Raises:
        ShapeMismatchError: If cell counts, action sets or row kinds differ
    """
    if a.n_q != b.n_q:
        raise ShapeMismatchError(f"Models have {a.n_q} and {b.n_q} cells")
    if a.index != b.index:
        raise ShapeMismatchError("Models have different action sets")
    if a.has_aggregate != b.has_aggregate:
        raise ShapeMismatchError("Only one model has single-action rows")

    epsilon = float(np.max(np.abs(a.P - b.P), initial=0.0))
    delta = float(np.max(np.abs(a.R - b.R), initial=0.0))
    if a.P_bar is not None and b.P_bar is not None:
        assert a.R_bar is not None and b.R_bar is not None
        epsilon = max(epsilon, float(np.max(np.abs(a.P_bar - b.P_bar))))
        delta = max(delta, float(np.max(np.abs(a.R_bar - b.R_bar))))
    return ModelDrift(epsilon=epsilon, delta=delta)
