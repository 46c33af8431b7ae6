import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from rlmba.core import InvalidInputError, PreconditionError, RngStream
from rlmba.selection import (
    PoolView,
    budgeted_kmeanspp,
    candidate_set,
    candidate_size,
    diversity_distance,
    gradient_embeddings,
    kmeans_objective,
    kmeanspp_seed,
    lloyd,
    score_pool,
    select_baseline,
    shannon_entropy,
    unified_score,
)


def test_kmeans_two_blobs():
    g = np.random.default_rng(0)
    pts = np.vstack([g.normal(0, 0.1, size=(50, 2)), g.normal(10, 0.1, size=(50, 2))])
    cents = budgeted_kmeanspp(pts, 2, RngStream(0, "km"))
    got = sorted(np.round(cents[:, 0]).tolist())
    assert got == [0.0, 10.0]


def test_kmeans_k_clamped_and_deterministic():
    pts = np.random.default_rng(1).normal(size=(4, 3))
    cents = budgeted_kmeanspp(pts, 10, RngStream(0, "km"))
    assert cents.shape == (4, 3)
    a = budgeted_kmeanspp(pts, 2, RngStream(5, "km"))
    b = budgeted_kmeanspp(pts, 2, RngStream(5, "km"))
    np.testing.assert_array_equal(a, b)


def test_kmeans_rejects_bad_input():
    with pytest.raises(PreconditionError):
        budgeted_kmeanspp(np.zeros((0, 2)), 1, RngStream(0, "km"))
    with pytest.raises(InvalidInputError):
        budgeted_kmeanspp(np.zeros((3, 2)), 1, RngStream(0, "km"), max_iters=6)


def test_lloyd_does_not_increase_objective():
    g = np.random.default_rng(2)
    pts = g.normal(size=(200, 3))
    seeds = pts[kmeanspp_seed(pts, 6, RngStream(0, "km"))]
    before = kmeans_objective(pts, seeds)
    after = kmeans_objective(pts, lloyd(pts, seeds, 5))
    assert after <= before + 1e-9


def test_kmeanspp_duplicates_fall_back_to_uniform():
    pts = np.zeros((5, 2))
    rows = kmeanspp_seed(pts, 5, RngStream(0, "km"))
    assert sorted(rows.tolist()) == [0, 1, 2, 3, 4]


def test_distance_examples():
    assert diversity_distance([3.0, 4.0], [[0.0, 0.0]]) == pytest.approx(5.0)
    assert diversity_distance([1.0, 1.0], [[1.0, 1.0], [5.0, 5.0]]) == 0.0
    d = diversity_distance([[0.0, 0.0], [6.0, 0.0]], [[1.0, 0.0], [4.0, 0.0]])
    np.testing.assert_allclose(d, [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        diversity_distance([1.0, 2.0], [[1.0, 2.0, 3.0]])


def test_unified_score_example():
    assert unified_score([[0.5, 1.0]], [0.2], [0.6, 0.4], 0.5)[0] == pytest.approx(0.3 + 0.4 + 0.1)
    assert unified_score([[1.0, 0.0]], [0.0], [0.6, 0.4], 1.0)[0] == pytest.approx(0.6)


def test_score_pool_normalizes():
    g = np.random.default_rng(3)
    alphas = 1 + g.exponential(size=(2, 30, 4))
    fused = g.normal(size=(30, 5))
    scored = score_pool(np.arange(30), alphas, fused, [0.5, 0.5], fused[:3], beta=1.0)
    for col in (scored.u_norm[:, 0], scored.u_norm[:, 1], scored.d_norm):
        assert col.min() == 0.0 and col.max() == pytest.approx(1.0)
    assert np.all(scored.q >= 0) and np.all(scored.q <= 2.0 + 1e-12)
    # centroids drawn from the pool give those points zero distance
    assert np.all(scored.d_raw[:3] == 0.0)


def test_score_pool_constant_signals():
    alphas = np.ones((2, 5, 3))
    fused = np.zeros((5, 2))
    scored = score_pool(np.arange(5), alphas, fused, [0.5, 0.5], np.zeros((1, 2)))
    np.testing.assert_array_equal(scored.q, np.zeros(5))
    cands = candidate_set(scored, 2, 1.5)
    np.testing.assert_array_equal(cands.ids, [0, 1, 2])


def test_candidate_size():
    assert candidate_size(30, 5.0, 1000) == 150
    assert candidate_size(3, 1.5, 100) == 5
    assert candidate_size(30, 5.0, 40) == 40
    assert candidate_size(10, 1.1, 100) == 11


def brute_force_top(q, ids, k):
    pairs = sorted(zip(q.tolist(), ids.tolist()), key=lambda p: (-p[0], p[1]))
    return [i for _, i in pairs[:k]]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_candidate_set_matches_sort_oracle(seed):
    g = np.random.default_rng(seed)
    n = int(g.integers(1, 60))
    ids = g.permutation(1000)[:n]
    q = np.round(g.uniform(size=n), 1)  # coarse values force ties
    scored = score_pool(ids, 1 + g.exponential(size=(2, n, 3)), g.normal(size=(n, 2)), [0.5, 0.5],
                        np.zeros((1, 2)))
    scored = dataclasses.replace(scored, q=q)
    b = int(g.integers(1, n + 1))
    kappa = float(g.uniform(1, 4))
    cands = candidate_set(scored, b, kappa)
    k = min(math.ceil(kappa * b - 1e-9), n)
    assert cands.ids.tolist() == brute_force_top(q, ids, k)
    np.testing.assert_array_equal(scored.ids[cands.rows], cands.ids)


def test_candidate_set_rejects_bad_args():
    scored = score_pool(np.arange(3), np.ones((1, 3, 2)) + 1, np.zeros((3, 1)), [1.0], np.zeros((1, 1)))
    with pytest.raises(InvalidInputError):
        candidate_set(scored, 0)
    with pytest.raises(InvalidInputError):
        candidate_set(scored, 1, kappa=0.5)


def test_entropy():
    np.testing.assert_allclose(shannon_entropy([[0.5, 0.5], [1.0, 0.0]]), [np.log(2), 0.0])


def make_view(n=40, seed=0, c=3, h=4):
    g = np.random.default_rng(seed)
    probs = g.dirichlet(np.ones(c), size=n)
    return PoolView(
        ids=np.arange(100, 100 + n),
        fused_features=g.normal(size=(n, h)),
        fused_probs=probs,
        mm_probs=probs,
        labeled_features=g.normal(size=(5, h)),
    )


@pytest.mark.parametrize("strategy", ["random", "entropy", "coreset", "badge_lite"])
def test_baselines_return_distinct_pool_ids(strategy):
    view = make_view()
    got = select_baseline(strategy, view, 10, RngStream(0, strategy))
    assert len(set(got.tolist())) == 10
    assert set(got.tolist()) <= set(view.ids.tolist())


def test_entropy_ties_go_to_lowest_ids():
    view = make_view()
    uniform = PoolView(view.ids, view.fused_features, np.full((40, 3), 1 / 3), view.mm_probs,
                       view.labeled_features)
    got = select_baseline("entropy", uniform, 4, RngStream(0, "e"))
    assert got.tolist() == [100, 101, 102, 103]


def test_entropy_picks_most_uncertain():
    view = make_view()
    got = select_baseline("entropy", view, 5, RngStream(0, "e"))
    ent = shannon_entropy(view.fused_probs)
    assert set(got.tolist()) == set((view.ids[np.argsort(-ent)[:5]]).tolist())


def test_coreset_first_pick_is_farthest():
    view = make_view()
    dmin = cdist(view.fused_features, view.labeled_features).min(axis=1)
    got = select_baseline("coreset", view, 1, RngStream(0, "c"))
    assert got[0] == view.ids[np.argmax(dmin)]


def test_badge_first_pick_is_largest_embedding():
    view = make_view()
    emb = gradient_embeddings(view.mm_probs, view.fused_features)
    got = select_baseline("badge_lite", view, 3, RngStream(0, "b"))
    assert got[0] == view.ids[np.argmax((emb ** 2).sum(axis=1))]


def test_baseline_rejects_bad_budget_and_name():
    view = make_view(n=5)
    with pytest.raises(PreconditionError):
        select_baseline("random", view, 6, RngStream(0, "r"))
    with pytest.raises(InvalidInputError):
        select_baseline("bald", view, 2, RngStream(0, "r"))
