"""Mean-drift penalty keeping the average transform near the identity.

Groupwise registration determines transforms only up to a common factor;
this penalty softly pins that gauge by penalizing the squared parameter
distance between the mean transform and the identity:

    P = lam * || mean_k p_k - p_identity ||^2
"""

from __future__ import annotations

import numpy as np

from .transform import AffineStack

__all__ = ["identity_params", "penalty_value", "penalty_gradient"]


def identity_params(d: int) -> np.ndarray:
    return np.concatenate([np.eye(d).ravel(), np.zeros(d)])


def penalty_value(stack: AffineStack, lam: float) -> float:
    if lam < 0:
        raise ValueError("lam must be >= 0")
    drift = stack.params_matrix().mean(axis=0) - identity_params(stack.dim)
    return float(lam * (drift @ drift))


def penalty_gradient(stack: AffineStack, lam: float) -> np.ndarray:
    """Per-frame gradient rows; identical for every frame by symmetry."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    params = stack.params_matrix()
    drift = params.mean(axis=0) - identity_params(stack.dim)
    row = (2.0 * lam / params.shape[0]) * drift
    return np.tile(row, (params.shape[0], 1))
