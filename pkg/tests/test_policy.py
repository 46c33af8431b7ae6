import itertools
from collections import Counter

import numpy as np
import pytest

from rlmba.core import ConfigError, InvalidInputError, MetricsReport, NumericalError, PreconditionError, RngStream
from rlmba.learner import TrainDiagnostics
from rlmba.policy import (
    RewardState,
    RewardTrace,
    StateBuilder,
    candidate_features,
    compute_reward,
    init_policy,
    log_prob_and_grad,
    policy_logits,
    raw_state,
    reinforce_update,
    sample_batch,
    sequence_log_prob,
    standardize,
    state_names,
)
from rlmba.selection import score_pool


def make_scored(n=8, m=2, seed=0):
    g = np.random.default_rng(seed)
    fused = g.normal(size=(n, 3))
    return score_pool(np.arange(n), 1 + g.exponential(size=(m, n, 4)), fused,
                      np.full(m, 1 / m), fused[:2])


METRICS = MetricsReport(top1=0.5, nll=1.2, ece=0.1)
DIAG = TrainDiagnostics(loss_slope=-0.01, grad_norm=0.3)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_state_length(m):
    scored = make_scored(m=m)
    vec = raw_state(METRICS, np.zeros(m), np.full(m, 1 / m), scored, DIAG)
    assert vec.shape == (7 + 2 * m,) == (len(state_names(m)),)
    assert vec[1] == pytest.approx(1.2 / 2.2)


def test_state_rejects_non_finite():
    with pytest.raises(NumericalError):
        raw_state(MetricsReport(0.5, np.inf, 0.1), [0.0, 0.0], [0.5, 0.5], make_scored(), DIAG)


def test_standardize():
    first = np.array([1.0, 2.0])
    np.testing.assert_array_equal(standardize(first, []), first)
    z = standardize(np.array([3.0, 2.0]), [first])
    np.testing.assert_allclose(z, [1.0, 0.0])
    builder = StateBuilder()
    for _ in range(3):
        s = builder.build(METRICS, [0.0, 0.0], [0.5, 0.5], make_scored(), DIAG)
    assert np.all(np.abs(s) < 1e-3)   # constant raw states standardize to ~0


def test_candidate_features():
    scored = make_scored()
    f = candidate_features(scored, [3, 1])
    assert f.shape == (2, 5)
    np.testing.assert_allclose(f[:, 3], scored.q[[3, 1]])


@pytest.mark.parametrize("k", [2, 3, 4])
def test_plackett_luce_normalizes(k):
    z = np.random.default_rng(k).normal(size=k)
    for b in range(1, k + 1):
        total = sum(np.exp(sequence_log_prob(z, order)[0]) for order in itertools.permutations(range(k), b))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_single_draw_is_softmax():
    z = np.array([0.3, -1.0, 2.0])
    p = np.exp(z) / np.exp(z).sum()
    for i in range(3):
        assert np.exp(sequence_log_prob(z, [i])[0]) == pytest.approx(p[i])


def test_sequence_example():
    # uniform over 3, draw 2 ordered: 1/3 * 1/2
    assert np.exp(sequence_log_prob(np.zeros(3), [2, 0])[0]) == pytest.approx(1 / 6)
    with pytest.raises(InvalidInputError):
        sequence_log_prob(np.zeros(3), [1, 1])


def test_sample_batch_monte_carlo():
    z = np.array([1.0, 0.0, -0.5])
    rng = RngStream(0, "mc")
    counts = Counter()
    n = 20000
    for i in range(n):
        act = sample_batch(z, 2, rng.child(str(i)))
        counts[tuple(act.rows.tolist())] += 1
    for order, c in counts.items():
        p = np.exp(sequence_log_prob(z, order)[0])
        assert abs(c / n - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_sample_batch_contract():
    z = np.random.default_rng(0).normal(size=10)
    act = sample_batch(z, 4, RngStream(0, "s"), ids=np.arange(100, 110))
    assert len(set(act.rows.tolist())) == 4
    np.testing.assert_array_equal(act.ids, act.rows + 100)
    assert act.log_prob == pytest.approx(sequence_log_prob(z, act.rows)[0])
    with pytest.raises(PreconditionError):
        sample_batch(z, 11, RngStream(0, "s"))
    with pytest.raises(NumericalError):
        sample_batch(np.array([0.0, np.nan]), 1, RngStream(0, "s"))


def test_zero_policy_is_uniform():
    theta = init_policy(6, RngStream(0, "p"), hidden=5)
    z = policy_logits(theta, np.ones(3), np.ones((4, 3)))
    np.testing.assert_array_equal(z, np.zeros(4))


def policy_instance(seed):
    g = np.random.default_rng(seed)
    s, f, k = 4, 3, int(g.integers(3, 7))
    theta = init_policy(s + f, RngStream(seed, "p"), hidden=6, zero_last=False)
    state = g.normal(size=s)
    feats = g.normal(size=(k, f))
    order = g.permutation(k)[: int(g.integers(1, k + 1))]
    return theta, state, feats, order


@pytest.mark.parametrize("seed", range(5))
def test_policy_gradient_matches_finite_differences(seed):
    theta, state, feats, order = policy_instance(seed)
    _, grad = log_prob_and_grad(theta, state, feats, order)
    flat = theta.flatten()
    fd = np.zeros_like(flat)
    eps = 1e-6
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += eps
        dn[i] -= eps
        lp = log_prob_and_grad(theta.assign_flat(up), state, feats, order)[0]
        lm = log_prob_and_grad(theta.assign_flat(dn), state, feats, order)[0]
        fd[i] = (lp - lm) / (2 * eps)
    err = np.abs(grad.flatten() - fd) / np.maximum(np.abs(grad.flatten()) + np.abs(fd), 1e-7)
    assert err.max() < 1e-4


def trace(adv):
    return RewardTrace(mode="absolute", raw=0.0, smoothed=0.0, baseline=0.0, advantage=adv)


def test_reinforce_moves_log_prob_with_advantage():
    theta, state, feats, order = policy_instance(1)
    act = sample_batch(policy_logits(theta, state, feats), len(order), RngStream(0, "a"))
    before = log_prob_and_grad(theta, state, feats, act.rows)[0]
    up = reinforce_update(theta, state, feats, act, trace(0.5), lr=1e-3)
    down = reinforce_update(theta, state, feats, act, trace(-0.5), lr=1e-3)
    assert log_prob_and_grad(up, state, feats, act.rows)[0] > before
    assert log_prob_and_grad(down, state, feats, act.rows)[0] < before


def test_reinforce_zero_advantage_is_noop():
    theta, state, feats, order = policy_instance(2)
    act = sample_batch(policy_logits(theta, state, feats), 2, RngStream(0, "a"))
    out = reinforce_update(theta, state, feats, act, trace(0.0), lr=0.1)
    np.testing.assert_array_equal(out.flatten(), theta.flatten())
    clipped = reinforce_update(theta, state, feats, act, trace(5.0), lr=1e-3, clip=1.0)
    ref = reinforce_update(theta, state, feats, act, trace(1.0), lr=1e-3)
    np.testing.assert_allclose(clipped.flatten(), ref.flatten())


def test_relative_reward_example():
    curves = {"random": {1: 0.44}, "entropy": {1: 0.48}}
    tr, nxt = compute_reward(0.48, 1, curves, "relative", 0.9, RewardState.initial(0.4))
    assert tr.raw == pytest.approx(0.02)
    assert tr.smoothed == pytest.approx(0.02)
    assert tr.baseline == 0.0 and tr.advantage == pytest.approx(0.02)
    assert nxt.past_count == 1


def test_reward_modes_and_smoothing():
    state = RewardState.initial(0.40)
    tr1, state = compute_reward(0.50, 1, None, "incremental", 0.5, state)
    assert tr1.raw == pytest.approx(0.10) and tr1.smoothed == pytest.approx(0.10)
    tr2, state = compute_reward(0.54, 2, None, "incremental", 0.5, state)
    assert tr2.raw == pytest.approx(0.04)
    assert tr2.smoothed == pytest.approx(0.07)
    assert tr2.baseline == pytest.approx(0.10)
    assert tr2.advantage == pytest.approx(-0.03)
    tr3, _ = compute_reward(0.9, 1, None, "absolute", 0.0, RewardState.initial(0.0))
    assert tr3.raw == 0.9


def test_relative_with_zero_curve_equals_absolute():
    s_rel = s_abs = RewardState.initial(0.3)
    for t, top1 in enumerate([0.35, 0.41, 0.39, 0.5], start=1):
        rel, s_rel = compute_reward(top1, t, {"zero": {t: 0.0}}, "relative", 0.8, s_rel)
        ab, s_abs = compute_reward(top1, t, None, "absolute", 0.8, s_abs)
        assert (rel.raw, rel.smoothed, rel.baseline, rel.advantage) == (ab.raw, ab.smoothed, ab.baseline, ab.advantage)


def test_advantage_clipped():
    tr, _ = compute_reward(5.0, 1, None, "absolute", 0.0, RewardState.initial(0.0), clip=1.0)
    assert tr.advantage == 1.0


def test_reward_errors():
    st0 = RewardState.initial(0.0)
    with pytest.raises(ConfigError):
        compute_reward(0.5, 1, {}, "relative", 0.9, st0)
    with pytest.raises(ConfigError):
        compute_reward(0.5, 2, {"r": {1: 0.4}}, "relative", 0.9, st0)
    with pytest.raises(ConfigError):
        compute_reward(0.5, 1, None, "cumulative", 0.9, st0)
    with pytest.raises(ConfigError):
        compute_reward(0.5, 1, None, "absolute", 1.0, st0)
