"""Round state, candidate-conditioned selection policy and REINFORCE.

The policy scores each candidate with a small tanh MLP over the round state
concatenated with that candidate's own selection signals, then draws the
query batch one item at a time from a softmax over the candidates still
available (Plackett-Luce order). The batch log-probability is the sum of
the per-step log-probabilities, which is what REINFORCE differentiates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, InvalidInputError, MetricsReport, NumericalError, PreconditionError, RngStream, log_softmax
from .selection import ScoredPool

REWARD_MODES = ("relative", "absolute", "incremental")
STD_FLOOR = 1e-6


# -- state -------------------------------------------------------------------

def state_names(m: int) -> list:
    return (
        ["top1", "nll_sq", "ece"]
        + [f"delta{i}" for i in range(m)]
        + [f"w{i}" for i in range(m)]
        + ["u_bar", "d_bar", "loss_slope", "grad_norm"]
    )


def raw_state(val_metrics: MetricsReport, delta, w, scored: ScoredPool, diagnostics) -> np.ndarray:
    """Unstandardized state: squashed validation metrics, gaps, weights,
    pool summaries and training diagnostics (length ``7 + 2M``)."""
    nll = val_metrics.nll
    g = [val_metrics.top1, nll / (1.0 + nll), val_metrics.ece]
    u_bar = float(np.mean(scored.u_norm @ np.asarray(w, float)))
    d_bar = float(np.mean(scored.d_norm))
    rho = [diagnostics.loss_slope, diagnostics.grad_norm]
    vec = np.concatenate([g, np.asarray(delta, float), np.asarray(w, float), [u_bar, d_bar], rho])
    if not np.all(np.isfinite(vec)):
        raise NumericalError("state vector has non-finite entries")
    return vec


def standardize(raw, history) -> np.ndarray:
    """Z-score ``raw`` against the episode's states so far, itself included.

    The first round passes through unchanged. Standard deviations are
    floored at ``STD_FLOOR`` so constant coordinates map to ~0.
    """
    raw = np.asarray(raw, dtype=float)
    if len(history) == 0:
        return raw.copy()
    stack = np.vstack([*history, raw])
    mu = stack.mean(axis=0)
    sd = np.maximum(stack.std(axis=0), STD_FLOOR)
    return (raw - mu) / sd


@dataclass
class StateBuilder:
    """Accumulates raw states across the rounds of one episode."""

    history: list = field(default_factory=list)

    def build(self, val_metrics, delta, w, scored, diagnostics) -> np.ndarray:
        raw = raw_state(val_metrics, delta, w, scored, diagnostics)
        state = standardize(raw, self.history)
        self.history.append(raw)
        return state


def candidate_features(scored: ScoredPool, rows) -> np.ndarray:
    """Per-candidate inputs ``[u_1..u_M, d, q, sum_m w_m u_m]`` (normalized)."""
    rows = np.asarray(rows, dtype=np.int64)
    u = scored.u_norm[rows]
    return np.column_stack([u, scored.d_norm[rows], scored.q[rows], u @ scored.w])


# -- network -----------------------------------------------------------------

@dataclass
class PolicyParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def blocks(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "PolicyParams":
        return PolicyParams(*(a.copy() for a in self.blocks()))

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.blocks()])

    def assign_flat(self, vec) -> "PolicyParams":
        out = self.copy()
        pos = 0
        for a in out.blocks():
            a[...] = np.reshape(vec[pos:pos + a.size], a.shape)
            pos += a.size
        return out


def init_policy(input_dim: int, rng: RngStream, hidden: int = 64, zero_last: bool = True) -> PolicyParams:
    """Uniform fan-in init; a zeroed output layer starts from a uniform policy."""
    g = rng.generator
    bound = 1.0 / np.sqrt(input_dim)
    w1 = g.uniform(-bound, bound, size=(input_dim, hidden))
    if zero_last:
        w2 = np.zeros(hidden)
    else:
        w2 = g.uniform(-1.0 / np.sqrt(hidden), 1.0 / np.sqrt(hidden), size=hidden)
    return PolicyParams(w1=w1, b1=np.zeros(hidden), w2=w2, b2=np.zeros(()))


def _inputs(state, cand_feats) -> np.ndarray:
    cand_feats = np.atleast_2d(np.asarray(cand_feats, dtype=float))
    if cand_feats.shape[0] == 0:
        raise PreconditionError("no candidates")
    s = np.broadcast_to(np.asarray(state, float), (cand_feats.shape[0], len(state)))
    return np.hstack([s, cand_feats])


def policy_logits(theta: PolicyParams, state, cand_feats) -> np.ndarray:
    x = _inputs(state, cand_feats)
    if x.shape[1] != theta.w1.shape[0]:
        raise InvalidInputError(f"policy expects {theta.w1.shape[0]} inputs, got {x.shape[1]}")
    h = np.tanh(x @ theta.w1 + theta.b1)
    return h @ theta.w2 + theta.b2


# -- batch sampling ----------------------------------------------------------

@dataclass(frozen=True)
class BatchAction:
    rows: np.ndarray           # candidate positions, in draw order
    ids: np.ndarray
    log_prob: float
    step_log_probs: np.ndarray


def sequence_log_prob(z, order) -> tuple:
    """Log-probability of drawing ``order`` sequentially without replacement,
    its per-step terms and its gradient with respect to the logits ``z``."""
    z = np.asarray(z, dtype=float)
    remaining = np.ones(z.shape[0], dtype=bool)
    steps = []
    grad = np.zeros_like(z)
    for r in order:
        if not remaining[r]:
            raise InvalidInputError("order repeats a candidate")
        avail = np.flatnonzero(remaining)
        lp = log_softmax(z[avail])
        pos = int(np.searchsorted(avail, r))
        steps.append(float(lp[pos]))
        grad[avail] -= np.exp(lp)
        grad[r] += 1.0
        remaining[r] = False
    steps = np.array(steps)
    return float(steps.sum()), steps, grad


def sample_batch(z, b: int, rng: RngStream, ids=None) -> BatchAction:
    """Draw ``b`` distinct candidates, one softmax draw per step."""
    z = np.asarray(z, dtype=float)
    k = z.shape[0]
    if b < 1 or b > k:
        raise PreconditionError(f"cannot draw {b} of {k} candidates")
    if not np.all(np.isfinite(z)):
        raise NumericalError("non-finite logits")
    g = rng.generator
    remaining = np.ones(k, dtype=bool)
    order, steps = [], []
    for _ in range(b):
        avail = np.flatnonzero(remaining)
        lp = log_softmax(z[avail])
        pick = int(g.choice(avail.shape[0], p=np.exp(lp - np.logaddexp.reduce(lp))))
        order.append(int(avail[pick]))
        steps.append(float(lp[pick]))
        remaining[avail[pick]] = False
    rows = np.array(order, dtype=np.int64)
    ids = rows if ids is None else np.asarray(ids)[rows]
    steps = np.array(steps)
    return BatchAction(rows=rows, ids=np.asarray(ids), log_prob=float(steps.sum()), step_log_probs=steps)


def log_prob_and_grad(theta: PolicyParams, state, cand_feats, order) -> tuple:
    """``log pi(a | s)`` for the ordered batch ``order`` and its parameter gradient."""
    x = _inputs(state, cand_feats)
    pre = x @ theta.w1 + theta.b1
    h = np.tanh(pre)
    z = h @ theta.w2 + theta.b2
    logp, _, dz = sequence_log_prob(z, order)
    d_pre = np.outer(dz, theta.w2) * (1.0 - h * h)
    grad = PolicyParams(
        w1=x.T @ d_pre,
        b1=d_pre.sum(axis=0),
        w2=h.T @ dz,
        b2=np.array(dz.sum()),
    )
    return logp, grad


# -- reward ------------------------------------------------------------------

@dataclass(frozen=True)
class RewardState:
    prev_top1: float
    smoothed: float | None = None
    past_sum: float = 0.0
    past_count: int = 0

    @classmethod
    def initial(cls, initial_top1: float) -> "RewardState":
        return cls(prev_top1=float(initial_top1))


@dataclass(frozen=True)
class RewardTrace:
    mode: str
    raw: float
    smoothed: float
    baseline: float
    advantage: float

    def as_dict(self) -> dict:
        return {"mode": self.mode, "raw": self.raw, "smoothed": self.smoothed,
                "baseline": self.baseline, "advantage": self.advantage}


def compute_reward(
    top1: float,
    round_idx: int,
    curves: dict | None,
    mode: str,
    ema_coeff: float,
    prev: RewardState,
    clip: float = 1.0,
) -> tuple:
    """Round reward, its EMA-smoothed value, baseline and clipped advantage.

    ``curves`` maps a strategy name to ``{round: top1}``. In relative mode
    the raw reward is ``top1`` minus the mean of the curves at this round;
    absolute uses ``top1`` itself; incremental the change since the last
    round (the seed-set model for round 1). The baseline is the mean of all
    earlier smoothed rewards (0 in round 1). Returns ``(trace, next_state)``.
    """
    if mode not in REWARD_MODES:
        raise ConfigError(f"unknown reward mode {mode!r}")
    if not 0.0 <= ema_coeff < 1.0:
        raise ConfigError("ema coefficient must be in [0, 1)")
    if clip <= 0:
        raise ConfigError("advantage clip must be positive")
    if mode == "relative":
        if not curves:
            raise ConfigError("relative reward needs at least one baseline curve")
        try:
            ref = [float(c[round_idx]) for c in curves.values()]
        except KeyError as exc:
            raise ConfigError(f"baseline curve lacks round {round_idx}") from exc
        raw = top1 - float(np.mean(ref))
    elif mode == "absolute":
        raw = float(top1)
    else:
        raw = float(top1) - prev.prev_top1
    smoothed = raw if prev.smoothed is None else ema_coeff * prev.smoothed + (1.0 - ema_coeff) * raw
    baseline = prev.past_sum / prev.past_count if prev.past_count else 0.0
    advantage = float(np.clip(smoothed - baseline, -clip, clip))
    trace = RewardTrace(mode=mode, raw=float(raw), smoothed=float(smoothed),
                        baseline=float(baseline), advantage=advantage)
    nxt = RewardState(prev_top1=float(top1), smoothed=float(smoothed),
                      past_sum=prev.past_sum + smoothed, past_count=prev.past_count + 1)
    return trace, nxt


def reinforce_update(
    theta: PolicyParams,
    state,
    cand_feats,
    action: BatchAction,
    trace: RewardTrace,
    lr: float,
    clip: float | None = None,
) -> PolicyParams:
    """One ascent step ``theta + lr * A * grad log pi(a | s)``."""
    if not np.isfinite(action.log_prob):
        raise PreconditionError("action log-probability must be finite")
    adv = trace.advantage if clip is None else float(np.clip(trace.advantage, -clip, clip))
    if adv == 0.0 or lr == 0.0:
        return theta.copy()
    _, grad = log_prob_and_grad(theta, state, cand_feats, action.rows)
    if not all(np.all(np.isfinite(g)) for g in grad.blocks()):
        raise NumericalError("non-finite policy gradient")
    out = theta.copy()
    for p, g in zip(out.blocks(), grad.blocks()):
        p += lr * adv * g
    return out
