"""Adaptive modality contribution balancing.

Per-modality validation accuracy gaps against the fused head are turned
into simplex fusion weights by a temperature softmax, optionally floored
so no modality vanishes.
"""

from __future__ import annotations

import numpy as np

from .core import InvalidInputError, apply_floor, softmax

DEFAULT_TAU = 0.5
DEFAULT_EPSILON = 0.05


def contribution_gaps(per_modality_top1, multimodal_top1: float) -> np.ndarray:
    """Accuracy of each modality head minus the multimodal head's accuracy."""
    top1 = np.asarray(per_modality_top1, dtype=float).reshape(-1)
    mm = float(multimodal_top1)
    if top1.size == 0:
        raise InvalidInputError("need at least one modality")
    if not (np.all((top1 >= 0) & (top1 <= 1)) and 0.0 <= mm <= 1.0):
        raise InvalidInputError("accuracies must lie in [0, 1]")
    return top1 - mm


def update_weights(delta, tau: float = DEFAULT_TAU, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Map contribution gaps to simplex weights via ``softmax(delta / tau)``.

    Smaller ``tau`` sharpens the response to a gap. A positive ``epsilon``
    applies the floor rule afterwards.
    """
    if not np.isfinite(tau) or tau <= 0:
        raise InvalidInputError(f"tau must be positive, got {tau!r}")
    if epsilon < 0:
        raise InvalidInputError(f"epsilon must be non-negative, got {epsilon!r}")
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if not np.all(np.isfinite(delta)):
        raise InvalidInputError("gaps must be finite")
    w = softmax(delta / tau)
    if epsilon > 0:
        w = apply_floor(w, epsilon)
    return w


def uniform_weights(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)
