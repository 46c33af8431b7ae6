"""Evidence-level fusion of per-modality Dirichlet heads and difficulty.

All functions operate on the trailing class axis, so a single concentration
vector ``(C,)`` and a batch ``(N, C)`` are handled alike. Per-modality
stacks carry the modality on the leading axis: ``(M, ..., C)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, check_simplex


@dataclass(frozen=True)
class FusedUncertainty:
    per_class_var: np.ndarray
    difficulty: np.ndarray
    alpha0: np.ndarray


def fuse_evidence(alphas, w) -> np.ndarray:
    """Weighted additive fusion ``1 + sum_m w_m (alpha_m - 1)``.

    ``alphas`` has the modality on axis 0. Every concentration must be at
    least 1, the zero-evidence prior; anything below means an upstream head
    is broken, so it is rejected instead of clamped.
    """
    alphas = np.asarray(alphas, dtype=float)
    w = check_simplex(w)
    if alphas.shape[0] != w.shape[0]:
        raise InvalidInputError(f"{alphas.shape[0]} evidence stacks for {w.shape[0]} weights")
    if not np.all(np.isfinite(alphas)) or np.any(alphas < 1.0):
        raise InvalidInputError("per-modality concentrations must be finite and >= 1")
    evidence = alphas - 1.0
    fused = 1.0 + np.tensordot(w, evidence, axes=(0, 0))
    return fused


def dirichlet_uncertainty(alpha) -> FusedUncertainty:
    """Predictive variance of each class probability and its class mean.

    ``Var[p_c] = a_c (a_0 - a_c) / (a_0^2 (a_0 + 1))``; the difficulty score
    is the mean over classes.
    """
    alpha = np.asarray(alpha, dtype=float)
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
        raise InvalidInputError("concentrations must be finite and strictly positive")
    a0 = alpha.sum(axis=-1, keepdims=True)
    var = alpha * (a0 - alpha) / (a0 * a0 * (a0 + 1.0))
    return FusedUncertainty(
        per_class_var=var,
        difficulty=var.mean(axis=-1),
        alpha0=a0[..., 0],
    )


def per_modality_uncertainty(alphas) -> np.ndarray:
    """Difficulty score of each modality head separately, shape ``(M, ...)``."""
    alphas = np.asarray(alphas, dtype=float)
    return dirichlet_uncertainty(alphas).difficulty


def expected_probabilities(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return alpha / alpha.sum(axis=-1, keepdims=True)
