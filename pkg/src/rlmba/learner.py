"""Desk-scale multimodal classifier with evidential per-modality heads.

Each modality has one affine encoder ``f_m = x_m A_m + a_m`` into a shared
hidden width. A linear head per modality turns ``f_m`` into Dirichlet
evidence, and a multimodal linear head reads the weighted fused feature
``f = sum_m w_m f_m``. Everything is small enough that gradients are written
out by hand and checked against finite differences in the test-suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from .core import (
    InvalidInputError,
    MetricsReport,
    MultimodalDataset,
    NumericalError,
    PreconditionError,
    RngStream,
    check_simplex,
    compute_metrics,
    log_softmax,
    sigmoid,
    softmax,
    softplus,
)

CHECKPOINT_VERSION = 1
TEMPERATURE_GRID = np.geomspace(0.25, 4.0, 25)


@dataclass
class LearnerConfig:
    dims: tuple
    n_classes: int
    hidden_dim: int = 32
    learning_rate: float = 0.5
    epochs: int = 30
    weight_decay: float = 0.01
    kl_coeff: float = 0.01
    warm_start: bool = True

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) < 1 or any(d < 1 for d in self.dims):
            raise InvalidInputError("need at least one modality with positive dimension")
        if self.n_classes < 2:
            raise InvalidInputError("need at least two classes")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.hidden_dim < 1:
            raise InvalidInputError("hidden_dim must be >= 1")
        if self.weight_decay < 0 or self.kl_coeff < 0:
            raise InvalidInputError("regularizer coefficients must be non-negative")

    @property
    def n_modalities(self) -> int:
        return len(self.dims)


@dataclass
class ModelParams:
    enc_w: list
    enc_b: list
    head_w: list
    head_b: list
    mm_w: np.ndarray
    mm_b: np.ndarray

    def blocks(self) -> list:
        """All parameter arrays in a fixed order (used for flattening)."""
        return [*self.enc_w, *self.enc_b, *self.head_w, *self.head_b, self.mm_w, self.mm_b]

    def block_names(self) -> list:
        m = len(self.enc_w)
        return (
            [f"enc_w{i}" for i in range(m)]
            + [f"enc_b{i}" for i in range(m)]
            + [f"head_w{i}" for i in range(m)]
            + [f"head_b{i}" for i in range(m)]
            + ["mm_w", "mm_b"]
        )

    def copy(self) -> "ModelParams":
        return ModelParams(
            enc_w=[a.copy() for a in self.enc_w],
            enc_b=[a.copy() for a in self.enc_b],
            head_w=[a.copy() for a in self.head_w],
            head_b=[a.copy() for a in self.head_b],
            mm_w=self.mm_w.copy(),
            mm_b=self.mm_b.copy(),
        )

    def zeros_like(self) -> "ModelParams":
        out = self.copy()
        for a in out.blocks():
            a[...] = 0.0
        return out

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.blocks()])

    def assign_flat(self, vec) -> "ModelParams":
        out = self.copy()
        pos = 0
        for a in out.blocks():
            a[...] = np.reshape(vec[pos:pos + a.size], a.shape)
            pos += a.size
        return out

    def sq_norm(self) -> float:
        return float(sum(np.sum(a * a) for a in self.blocks()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.blocks())


@dataclass(frozen=True)
class TrainDiagnostics:
    loss_slope: float
    grad_norm: float
    losses: tuple = field(default=(), repr=False)


@dataclass
class Forward:
    feats: np.ndarray       # (M, N, H)
    fused: np.ndarray       # (N, H)
    logits: np.ndarray      # (M, N, C)
    mm_logits: np.ndarray   # (N, C)


def init_model(config: LearnerConfig, rng: RngStream) -> ModelParams:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights and zero biases."""
    g = rng.generator
    h, c = config.hidden_dim, config.n_classes

    def draw(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return g.uniform(-bound, bound, size=shape)

    enc_w = [draw(d, (d, h)) for d in config.dims]
    head_w = [draw(h, (h, c)) for _ in config.dims]
    mm_w = draw(h, (h, c))
    return ModelParams(
        enc_w=enc_w,
        enc_b=[np.zeros(h) for _ in config.dims],
        head_w=head_w,
        head_b=[np.zeros(c) for _ in config.dims],
        mm_w=mm_w,
        mm_b=np.zeros(c),
    )


def _check_inputs(params: ModelParams, data: MultimodalDataset) -> None:
    if data.n_modalities != len(params.enc_w):
        raise InvalidInputError(
            f"dataset has {data.n_modalities} modalities, model expects {len(params.enc_w)}"
        )
    for m, (x, a) in enumerate(zip(data.features, params.enc_w)):
        if x.shape[1] != a.shape[0]:
            raise InvalidInputError(f"modality {m}: feature dim {x.shape[1]} != {a.shape[0]}")


def encode(params: ModelParams, data: MultimodalDataset, w) -> tuple:
    """Per-modality features ``(M, N, H)`` and their ``w``-weighted sum ``(N, H)``."""
    _check_inputs(params, data)
    w = check_simplex(w)
    if w.shape[0] != len(params.enc_w):
        raise InvalidInputError("weight vector length must equal the modality count")
    feats = np.stack([x @ a + b for x, a, b in zip(data.features, params.enc_w, params.enc_b)])
    fused = np.tensordot(w, feats, axes=(0, 0))
    return feats, fused


def forward(params: ModelParams, data: MultimodalDataset, w) -> Forward:
    feats, fused = encode(params, data, w)
    logits = np.stack([f @ v + c for f, v, c in zip(feats, params.head_w, params.head_b)])
    mm_logits = fused @ params.mm_w + params.mm_b
    return Forward(feats=feats, fused=fused, logits=logits, mm_logits=mm_logits)


def evidence_from_logits(logits, temps=None) -> np.ndarray:
    """``softplus(z / T) + 1`` with one temperature per leading modality slot."""
    logits = np.asarray(logits, dtype=float)
    if temps is None:
        return softplus(logits) + 1.0
    temps = np.asarray(temps, dtype=float).reshape((-1,) + (1,) * (logits.ndim - 1))
    if np.any(temps <= 0):
        raise InvalidInputError("temperatures must be positive")
    return softplus(logits / temps) + 1.0


def predict_evidence(params: ModelParams, data: MultimodalDataset, temps=None) -> np.ndarray:
    """Dirichlet concentrations per modality, shape ``(M, N, C)``, all >= 1."""
    m = len(params.enc_w)
    fwd = forward(params, data, np.full(m, 1.0 / m))
    return evidence_from_logits(fwd.logits, temps)


def _kl_to_uniform(alpha_tilde: np.ndarray) -> tuple:
    """KL(Dir(a) || Dir(1)) per row and its gradient with respect to ``a``."""
    c = alpha_tilde.shape[-1]
    s = alpha_tilde.sum(axis=-1, keepdims=True)
    kl = (
        gammaln(s[..., 0])
        - gammaln(c)
        - gammaln(alpha_tilde).sum(axis=-1)
        + ((alpha_tilde - 1.0) * (digamma(alpha_tilde) - digamma(s))).sum(axis=-1)
    )
    excess = (alpha_tilde - 1.0).sum(axis=-1, keepdims=True)
    grad = (alpha_tilde - 1.0) * polygamma(1, alpha_tilde) - polygamma(1, s) * excess
    return kl, grad


def loss_and_grad(params: ModelParams, data: MultimodalDataset, w, config: LearnerConfig) -> tuple:
    """Total training loss and its gradient as a ``ModelParams`` of arrays.

    Loss per sample: Bayes-risk cross-entropy ``log a_0 - log a_y`` summed
    over modality heads, softmax cross-entropy of the multimodal head, and
    ``kl_coeff`` times the KL of each head's non-target evidence to the
    uniform Dirichlet. Data terms are averaged over samples; an L2 penalty
    ``weight_decay * ||params||^2`` covers every parameter.
    """
    if len(data) == 0:
        raise PreconditionError("cannot train on an empty set")
    y = data.labels
    if np.any(y < 0):
        raise PreconditionError("training data must be fully labeled")
    w = check_simplex(w)
    n = len(data)
    c = config.n_classes
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y] = 1.0
    fwd = forward(params, data, w)
    grads = params.zeros_like()
    d_feats = np.zeros_like(fwd.feats)
    loss = 0.0

    for m in range(len(params.enc_w)):
        z = fwd.logits[m]
        alpha = softplus(z) + 1.0
        s = alpha.sum(axis=1, keepdims=True)
        alpha_y = alpha[np.arange(n), y]
        loss += float(np.mean(np.log(s[:, 0]) - np.log(alpha_y)))
        d_alpha = (1.0 / s - onehot / alpha_y[:, None]) / n
        if config.kl_coeff > 0:
            alpha_t = onehot + (1.0 - onehot) * alpha
            kl, g_kl = _kl_to_uniform(alpha_t)
            loss += config.kl_coeff * float(np.mean(kl))
            d_alpha += config.kl_coeff * g_kl * (1.0 - onehot) / n
        d_z = d_alpha * sigmoid(z)
        grads.head_w[m] = fwd.feats[m].T @ d_z
        grads.head_b[m] = d_z.sum(axis=0)
        d_feats[m] += d_z @ params.head_w[m].T

    logp = log_softmax(fwd.mm_logits)
    loss += float(-np.mean(logp[np.arange(n), y]))
    d_mm = (np.exp(logp) - onehot) / n
    grads.mm_w = fwd.fused.T @ d_mm
    grads.mm_b = d_mm.sum(axis=0)
    d_fused = d_mm @ params.mm_w.T
    for m in range(len(params.enc_w)):
        d_feats[m] += w[m] * d_fused
        grads.enc_w[m] = data.features[m].T @ d_feats[m]
        grads.enc_b[m] = d_feats[m].sum(axis=0)

    if config.weight_decay > 0:
        loss += config.weight_decay * params.sq_norm()
        for g, p in zip(grads.blocks(), params.blocks()):
            g += 2.0 * config.weight_decay * p
    return loss, grads


def train(
    params: ModelParams,
    labeled: MultimodalDataset,
    config: LearnerConfig,
    w=None,
    rng: RngStream | None = None,
) -> tuple:
    """Full-batch gradient descent for ``config.epochs`` epochs.

    ``w`` sets the fusion weights seen by the multimodal head (uniform when
    omitted). Training is deterministic, so ``rng`` is accepted only for
    interface symmetry with the stochastic stages.

    Returns the updated parameters and ``TrainDiagnostics`` where
    ``loss_slope = (loss_E - loss_1) / max(E - 1, 1)`` over the loss at the
    start of each epoch and ``grad_norm`` is the final epoch's gradient norm.
    """
    del rng
    if len(labeled) == 0:
        raise PreconditionError("labeled set is empty")
    m = len(params.enc_w)
    w = np.full(m, 1.0 / m) if w is None else check_simplex(w)
    current = params.copy()
    losses = []
    grad_norm = 0.0
    lr = config.learning_rate
    for _ in range(config.epochs):
        loss, grads = loss_and_grad(current, labeled, w, config)
        if not np.isfinite(loss):
            raise NumericalError("training loss became non-finite")
        losses.append(loss)
        grad_norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.blocks())))
        if lr != 0:
            for p, g in zip(current.blocks(), grads.blocks()):
                p -= lr * g
    if not current.is_finite():
        raise NumericalError("parameters became non-finite")
    slope = (losses[-1] - losses[0]) / max(len(losses) - 1, 1)
    return current, TrainDiagnostics(loss_slope=float(slope), grad_norm=grad_norm, losses=tuple(losses))


def _expected_prob_nll(logits, labels, temp) -> float:
    alpha = softplus(logits / temp) + 1.0
    p = alpha / alpha.sum(axis=1, keepdims=True)
    return float(-np.mean(np.log(p[np.arange(len(labels)), labels])))


def fit_temperatures(params: ModelParams, validation: MultimodalDataset, grid=TEMPERATURE_GRID) -> np.ndarray:
    """Per-modality temperature minimizing validation NLL over a log grid.

    Ties (within 1e-12 relative) go to the grid point closest to 1 in log
    scale, so a head whose NLL does not depend on T keeps ``T = 1``.
    """
    if len(validation) == 0:
        raise PreconditionError("validation set is empty")
    m = len(params.enc_w)
    fwd = forward(params, validation, np.full(m, 1.0 / m))
    grid = np.asarray(grid, dtype=float)
    closeness = np.abs(np.log(grid))
    temps = np.empty(m)
    for k in range(m):
        nll = np.array([_expected_prob_nll(fwd.logits[k], validation.labels, t) for t in grid])
        best = nll.min()
        tied = np.flatnonzero(nll <= best + 1e-12 * max(abs(best), 1.0))
        temps[k] = grid[tied[np.argmin(closeness[tied])]]
    return temps


def restrict_weights(w, mask) -> np.ndarray:
    """Zero weights outside ``mask`` and renormalize over the coalition."""
    w = np.asarray(w, dtype=float)
    mask = sorted(set(int(i) for i in mask))
    if not mask:
        raise PreconditionError("mask must name at least one modality")
    if mask[0] < 0 or mask[-1] >= w.shape[0]:
        raise InvalidInputError("mask refers to an unknown modality")
    out = np.zeros_like(w)
    out[mask] = w[mask]
    total = out.sum()
    if total <= 0:
        out[mask] = 1.0
        total = float(len(mask))
    return out / total


@dataclass(frozen=True)
class Evaluation:
    modality: tuple
    multimodal: MetricsReport

    @property
    def modality_top1(self) -> np.ndarray:
        return np.array([r.top1 for r in self.modality])


def evaluate(params: ModelParams, split: MultimodalDataset, temps, w, mask=None) -> Evaluation:
    """Metrics of every modality head and of the multimodal head on ``split``.

    Modality heads are scored with expected Dirichlet probabilities
    ``a / a_0``; the multimodal head with a softmax over its logits on the
    fused feature built from ``w`` restricted to ``mask``.
    """
    if len(split) == 0:
        raise PreconditionError("evaluation split is empty")
    m = len(params.enc_w)
    w = check_simplex(w)
    w_eff = w if mask is None else restrict_weights(w, mask)
    if temps is None:
        temps = np.ones(m)
    fwd = forward(params, split, w_eff)
    alphas = evidence_from_logits(fwd.logits, temps)
    probs = alphas / alphas.sum(axis=-1, keepdims=True)
    per_mod = tuple(compute_metrics(probs[k], split.labels) for k in range(m))
    mm = compute_metrics(softmax(fwd.mm_logits), split.labels)
    return Evaluation(modality=per_mod, multimodal=mm)


def save_params(path, params: ModelParams) -> None:
    arrays = {name: a for name, a in zip(params.block_names(), params.blocks())}
    arrays["version"] = np.array(CHECKPOINT_VERSION)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path) -> ModelParams:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise InvalidInputError(f"unsupported checkpoint version {version}")
        m = sum(1 for k in data.files if k.startswith("enc_w"))
        return ModelParams(
            enc_w=[data[f"enc_w{i}"] for i in range(m)],
            enc_b=[data[f"enc_b{i}"] for i in range(m)],
            head_w=[data[f"head_w{i}"] for i in range(m)],
            head_b=[data[f"head_b{i}"] for i in range(m)],
            mm_w=data["mm_w"],
            mm_b=data["mm_b"],
        )
