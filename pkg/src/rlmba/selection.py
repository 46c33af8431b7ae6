"""Diversity clustering, unified scoring, candidate sets and baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import InvalidInputError, PreconditionError, RngStream, check_simplex, minmax_normalize
from .efda import per_modality_uncertainty

DEFAULT_BETA = 1.0
DEFAULT_KAPPA = 5.0
MAX_KMEANS_ITERS = 5

STRATEGIES = ("random", "entropy", "coreset", "badge_lite")


def kmeans_objective(points, centroids) -> float:
    """Within-cluster sum of squared distances under nearest-centroid assignment."""
    d2 = cdist(np.asarray(points, float), np.asarray(centroids, float), "sqeuclidean")
    return float(d2.min(axis=1).sum())


def kmeanspp_seed(points, k: int, rng: RngStream, first: int | None = None) -> np.ndarray:
    """Row indices of ``k`` D^2-weighted seeds.

    ``first`` fixes the opening seed; otherwise it is drawn uniformly. Once
    every point coincides with a seed the remaining picks are uniform over
    unchosen rows.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    g = rng.generator
    chosen = [int(g.integers(n)) if first is None else int(first)]
    d2 = cdist(points, points[chosen[0]][None, :], "sqeuclidean")[:, 0]
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            nxt = int(g.choice(n, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(g.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, cdist(points, points[nxt][None, :], "sqeuclidean")[:, 0])
    return np.array(chosen, dtype=np.int64)


def lloyd(points, centroids, max_iters: int = MAX_KMEANS_ITERS) -> np.ndarray:
    """At most ``max_iters`` Lloyd steps, stopping once assignments settle.

    An empty cluster is moved onto the point lying farthest from its own
    centroid.
    """
    points = np.asarray(points, dtype=float)
    centroids = np.array(centroids, dtype=float)
    k = centroids.shape[0]
    prev = None
    for _ in range(max_iters):
        d2 = cdist(points, centroids, "sqeuclidean")
        assign = d2.argmin(axis=1)
        if prev is not None and np.array_equal(assign, prev):
            break
        prev = assign
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, points)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            own = d2[np.arange(points.shape[0]), assign].copy()
            for j in np.flatnonzero(~nonempty):
                far = int(np.argmax(own))
                centroids[j] = points[far]
                own[far] = -1.0
    return centroids


def budgeted_kmeanspp(features, k: int, rng: RngStream, max_iters: int = MAX_KMEANS_ITERS) -> np.ndarray:
    """k-means++ seeding followed by a capped number of Lloyd iterations.

    ``k`` is clamped to the number of points. Returns ``(k, H)`` centroids.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] == 0:
        raise PreconditionError("clustering needs a non-empty (N, H) array")
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if not 1 <= max_iters <= MAX_KMEANS_ITERS:
        raise InvalidInputError(f"max_iters must be in [1, {MAX_KMEANS_ITERS}]")
    k = min(int(k), features.shape[0])
    seeds = kmeanspp_seed(features, k, rng)
    return lloyd(features, features[seeds], max_iters)


def diversity_distance(f, centroids) -> np.ndarray:
    """Euclidean distance from each feature row to its nearest centroid."""
    f = np.asarray(f, dtype=float)
    single = f.ndim == 1
    f2 = np.atleast_2d(f)
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    if f2.shape[1] != centroids.shape[1]:
        raise InvalidInputError("feature and centroid dimensions differ")
    d = np.sqrt(cdist(f2, centroids, "sqeuclidean").min(axis=1))
    return float(d[0]) if single else d


def unified_score(u_norm, d_norm, w, beta: float) -> np.ndarray:
    """``sum_m w_m u_m + beta * d`` on normalized signals; ``u_norm`` is ``(N, M)``."""
    return np.asarray(u_norm, float) @ np.asarray(w, float) + beta * np.asarray(d_norm, float)


@dataclass(frozen=True)
class ScoredPool:
    ids: np.ndarray
    u_raw: np.ndarray      # (N, M)
    d_raw: np.ndarray      # (N,)
    u_norm: np.ndarray     # (N, M)
    d_norm: np.ndarray     # (N,)
    q: np.ndarray          # (N,)
    w: np.ndarray
    beta: float

    def __len__(self) -> int:
        return int(self.ids.shape[0])


def score_pool(ids, alphas, fused, w, centroids, beta: float = DEFAULT_BETA) -> ScoredPool:
    """Score every unlabeled instance by weighted uncertainty plus diversity.

    ``alphas`` are the per-modality concentrations ``(M, N, C)`` and
    ``fused`` the features ``(N, H)`` built with the same ``w``. Each signal
    is min-max normalized over the pool before weighting.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise PreconditionError("pool is empty")
    if beta < 0:
        raise InvalidInputError("beta must be non-negative")
    w = check_simplex(w)
    u_raw = per_modality_uncertainty(alphas).T
    d_raw = diversity_distance(np.atleast_2d(fused), centroids)
    u_norm = np.column_stack([minmax_normalize(u_raw[:, m]) for m in range(u_raw.shape[1])])
    d_norm = minmax_normalize(d_raw)
    q = unified_score(u_norm, d_norm, w, beta)
    return ScoredPool(ids=ids, u_raw=u_raw, d_raw=d_raw, u_norm=u_norm, d_norm=d_norm,
                      q=q, w=w, beta=float(beta))


@dataclass(frozen=True)
class CandidateSet:
    ids: np.ndarray
    rows: np.ndarray   # positions inside the ScoredPool
    q: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])


def candidate_size(b: int, kappa: float, pool_size: int) -> int:
    return min(math.ceil(round(kappa * b, 9)), pool_size)


def rank_desc(values, ids) -> np.ndarray:
    """Row order by value descending, ties toward the lower id."""
    return np.lexsort((np.asarray(ids), -np.asarray(values, dtype=float)))


def candidate_set(scored: ScoredPool, b: int, kappa: float = DEFAULT_KAPPA) -> CandidateSet:
    """The ``ceil(kappa * b)`` highest-scoring instances, sorted by score."""
    if len(scored) == 0:
        raise PreconditionError("pool is empty")
    if b < 1 or kappa < 1:
        raise InvalidInputError("need b >= 1 and kappa >= 1")
    k = candidate_size(b, kappa, len(scored))
    rows = rank_desc(scored.q, scored.ids)[:k]
    return CandidateSet(ids=scored.ids[rows], rows=rows, q=scored.q[rows])


@dataclass(frozen=True)
class PoolView:
    """What the classical strategies get to see of the unlabeled pool.

    ``fused_probs`` are expected probabilities of the fused Dirichlet,
    ``mm_probs`` the multimodal head's softmax output.
    """

    ids: np.ndarray
    fused_features: np.ndarray
    fused_probs: np.ndarray
    mm_probs: np.ndarray
    labeled_features: np.ndarray


def shannon_entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def _coreset(view: PoolView, b: int) -> np.ndarray:
    feats = view.fused_features
    if view.labeled_features.shape[0]:
        dmin = cdist(feats, view.labeled_features, "sqeuclidean").min(axis=1)
    else:
        dmin = np.full(feats.shape[0], np.inf)
    order_ids = view.ids
    picked = []
    for _ in range(b):
        cand = dmin.copy()
        cand[picked] = -1.0
        top = cand.max()
        ties = np.flatnonzero(cand == top)
        row = int(ties[np.argmin(order_ids[ties])])
        picked.append(row)
        dmin = np.minimum(dmin, cdist(feats, feats[row][None, :], "sqeuclidean")[:, 0])
    return np.array(picked, dtype=np.int64)


def gradient_embeddings(mm_probs, fused_features) -> np.ndarray:
    """Last-layer cross-entropy gradients at the predicted label, ``(N, C*H)``."""
    p = np.asarray(mm_probs, dtype=float)
    resid = p.copy()
    resid[np.arange(p.shape[0]), p.argmax(axis=1)] -= 1.0
    return (resid[:, :, None] * np.asarray(fused_features)[:, None, :]).reshape(p.shape[0], -1)


def _badge_lite(view: PoolView, b: int, rng: RngStream) -> np.ndarray:
    emb = gradient_embeddings(view.mm_probs, view.fused_features)
    norms = np.einsum("ij,ij->i", emb, emb)
    first = int(rank_desc(norms, view.ids)[0])
    return kmeanspp_seed(emb, b, rng, first=first)


def select_baseline(strategy: str, view: PoolView, b: int, rng: RngStream) -> np.ndarray:
    """Pick ``b`` ids from the pool with one of the classical strategies.

    random
        uniform without replacement.
    entropy
        highest Shannon entropy of the fused expected probabilities.
    coreset
        greedy k-center on fused features, grown from the labeled set.
    badge_lite
        k-means++ seeding over multimodal-head gradient embeddings, opened
        at the largest embedding as in BADGE.
    """
    n = view.ids.shape[0]
    if b < 1 or b > n:
        raise PreconditionError(f"cannot select {b} of {n} pool instances")
    if strategy == "random":
        rows = rng.generator.choice(n, size=b, replace=False)
    elif strategy == "entropy":
        rows = rank_desc(shannon_entropy(view.fused_probs), view.ids)[:b]
    elif strategy == "coreset":
        rows = _coreset(view, b)
    elif strategy == "badge_lite":
        rows = _badge_lite(view, b, rng)
    else:
        raise InvalidInputError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return view.ids[np.asarray(rows, dtype=np.int64)]
