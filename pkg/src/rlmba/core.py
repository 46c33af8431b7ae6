"""Shared types, simplex helpers, metrics and seeded random streams."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

ECE_BINS = 15


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's input contract."""


class PreconditionError(ValueError):
    """Raised when a call is made in a state the operation cannot handle."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite values."""


class ConfigError(ValueError):
    """Raised for invalid or inconsistent experiment configuration."""


class BudgetExhaustedError(RuntimeError):
    """Raised when the unlabeled pool cannot cover the requested rounds."""


@dataclass(frozen=True)
class MetricsReport:
    top1: float
    nll: float
    ece: float

    def as_dict(self) -> dict:
        return {"top1": self.top1, "nll": self.nll, "ece": self.ece}


class RngStream:
    """A labeled random stream derived from a master seed.

    Every stochastic step in the package draws from its own stream so that
    any component can be rerun in isolation. The generator is numpy's
    PCG64 seeded through ``SeedSequence([master_seed, label_hash])``; the
    label hash is the first 8 bytes of BLAKE2b, which is stable across
    processes and platforms (unlike ``hash``).
    """

    def __init__(self, master_seed: int, stream_label: str):
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_label = str(stream_label)
        digest = hashlib.blake2b(self.stream_label.encode("utf-8"), digest_size=8).digest()
        label_key = int.from_bytes(digest, "little")
        seq = np.random.SeedSequence([self.master_seed, label_key])
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.master_seed, f"{self.stream_label}/{label}")

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_label={self.stream_label!r})"


def check_simplex(w, atol: float = 1e-9) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0 or not np.all(np.isfinite(w)):
        raise InvalidInputError("weights must be a non-empty finite vector")
    if np.any(w < -atol) or abs(w.sum() - 1.0) > atol:
        raise InvalidInputError("weights must lie on the probability simplex")
    return w


def apply_floor(w, epsilon: float) -> np.ndarray:
    """Lift every weight by ``epsilon`` and renormalize.

    Keeps all modalities alive: each output entry is at least
    ``epsilon / (1 + M * epsilon)``.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("non-finite weight entry")
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon!r}")
    lifted = w + epsilon
    return lifted / lifted.sum()


def minmax_normalize(values) -> np.ndarray:
    """Affinely map ``values`` onto [0, 1]; a constant vector maps to zeros."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InvalidInputError("cannot normalize an empty vector")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("values must be finite")
    lo = v.min()
    span = v.max() - lo
    if span == 0:
        return np.zeros_like(v)
    return np.clip((v - lo) / span, 0.0, 1.0)


def softmax(z, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softplus(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def compute_metrics(prob_rows, labels, bins: int = ECE_BINS) -> MetricsReport:
    """Top-1 accuracy, negative log-likelihood (nats) and binned ECE.

    ``labels`` are 0-based class indices. Argmax ties resolve to the lowest
    class index (``np.argmax`` semantics). ECE uses ``bins`` equal-width
    bins over the max probability, right-closed: ``((b-1)/B, b/B]``.
    """
    p = np.atleast_2d(np.asarray(prob_rows, dtype=float))
    y = np.asarray(labels, dtype=int).reshape(-1)
    if p.shape[0] == 0:
        raise InvalidInputError("need at least one row")
    if p.shape[0] != y.shape[0]:
        raise InvalidInputError("rows and labels differ in length")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise InvalidInputError("probability rows must be non-negative and sum to 1")
    if np.any(y < 0) or np.any(y >= p.shape[1]):
        raise InvalidInputError("label out of range")
    n = p.shape[0]
    pred = np.argmax(p, axis=1)
    correct = (pred == y).astype(float)
    top1 = float(correct.mean())

    p_true = np.maximum(p[np.arange(n), y], np.finfo(float).tiny)
    nll = float(-np.mean(np.log(p_true)))

    conf = p[np.arange(n), pred]
    idx = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    ece = 0.0
    for b in range(bins):
        sel = idx == b
        if sel.any():
            ece += sel.sum() / n * abs(correct[sel].mean() - conf[sel].mean())
    return MetricsReport(top1=top1, nll=max(nll, 0.0), ece=float(min(ece, 1.0)))


@dataclass
class MultimodalDataset:
    """A set of multimodal instances stored column-wise.

    ``features[m]`` is an ``(N, d_m)`` array for modality ``m``. ``labels``
    holds 0-based class indices, or -1 where the label is unknown. ``ids``
    are unique integers; row position and id need not coincide.
    """

    ids: np.ndarray
    labels: np.ndarray
    features: list
    n_classes: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.features = [np.asarray(f, dtype=float) for f in self.features]
        n = self.ids.shape[0]
        if self.labels.shape[0] != n:
            raise InvalidInputError("ids and labels differ in length")
        if not self.features:
            raise InvalidInputError("need at least one modality")
        for m, f in enumerate(self.features):
            if f.ndim != 2 or f.shape[0] != n:
                raise InvalidInputError(f"modality {m} features must be ({n}, d)")
        if np.unique(self.ids).size != n:
            raise InvalidInputError("instance ids must be unique")
        if np.any(self.labels >= self.n_classes) or np.any(self.labels < -1):
            raise InvalidInputError("label out of range")

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n_modalities(self) -> int:
        return len(self.features)

    @property
    def dims(self) -> tuple:
        return tuple(int(f.shape[1]) for f in self.features)

    def take(self, rows) -> "MultimodalDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return MultimodalDataset(
            ids=self.ids[rows],
            labels=self.labels[rows],
            features=[f[rows] for f in self.features],
            n_classes=self.n_classes,
        )

    def rows_for_ids(self, ids) -> np.ndarray:
        order = np.argsort(self.ids, kind="stable")
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self.ids[order], ids)
        if np.any(pos >= len(self)) or np.any(self.ids[order][np.minimum(pos, len(self) - 1)] != ids):
            raise InvalidInputError("unknown instance id")
        return order[pos]
