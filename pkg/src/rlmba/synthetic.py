"""Synthetic multimodal Gaussian-blob data with controllable modality value."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, MultimodalDataset, RngStream


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset.

    Each class/modality pair gets a mean of length ``informativeness[m] *
    separation`` in a random direction; samples add isotropic noise of scale
    ``noise``. With ``drift`` on, modalities 0 and 1 swap informativeness
    for classes at or above ``drift_threshold``, so with ``(1, 0)`` the
    first separates only the early classes and the second only the late
    ones.
    """

    n_modalities: int
    n_classes: int
    n_samples: int
    dims: tuple
    informativeness: tuple
    noise: float = 1.0
    separation: float = 3.0
    drift: bool = False
    drift_threshold: int = 0

    def validate(self) -> None:
        if self.n_modalities < 1 or self.n_classes < 2 or self.n_samples < self.n_classes:
            raise InvalidInputError("need M >= 1, C >= 2 and at least one sample per class")
        if len(self.dims) != self.n_modalities or any(d < 1 for d in self.dims):
            raise InvalidInputError("dims must give one positive size per modality")
        if len(self.informativeness) != self.n_modalities or any(
            not 0.0 <= r <= 1.0 for r in self.informativeness
        ):
            raise InvalidInputError("informativeness must give one value in [0, 1] per modality")
        if self.noise <= 0 or self.separation < 0:
            raise InvalidInputError("noise must be > 0 and separation >= 0")
        if self.drift and (self.n_modalities < 2 or not 0 < self.drift_threshold < self.n_classes):
            raise InvalidInputError("drift needs M >= 2 and 0 < drift_threshold < C")


def class_means(spec: SyntheticSpec, rng: RngStream) -> list:
    """Per-modality ``(C, d_m)`` class means."""
    g = rng.generator
    strength = np.tile(np.asarray(spec.informativeness, float), (spec.n_classes, 1))
    if spec.drift:
        late = np.arange(spec.n_classes) >= spec.drift_threshold
        strength[late, 0], strength[late, 1] = spec.informativeness[1], spec.informativeness[0]
    means = []
    for m, d in enumerate(spec.dims):
        dirs = g.normal(size=(spec.n_classes, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        means.append(strength[:, m, None] * spec.separation * dirs)
    return means


def generate_synthetic(spec: SyntheticSpec, rng: RngStream) -> MultimodalDataset:
    """Balanced labeled dataset drawn from the recipe's Gaussian blobs."""
    spec.validate()
    means = class_means(spec, rng.child("means"))
    g = rng.child("samples").generator
    labels = np.arange(spec.n_samples) % spec.n_classes
    labels = labels[g.permutation(spec.n_samples)]
    features = [
        mu[labels] + spec.noise * g.normal(size=(spec.n_samples, mu.shape[1]))
        for mu in means
    ]
    return MultimodalDataset(
        ids=np.arange(spec.n_samples), labels=labels, features=features, n_classes=spec.n_classes
    )
