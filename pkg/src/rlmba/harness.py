"""Episode orchestration, stratified splits and Shapley modality analysis."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import amcb
from .config import ExperimentConfig
from .core import (
    BudgetExhaustedError,
    ConfigError,
    InvalidInputError,
    MultimodalDataset,
    PreconditionError,
    RngStream,
    softmax,
)
from .efda import expected_probabilities, fuse_evidence
from .files import TIMING_KEYS, read_curves, read_dataset, write_curve, write_episode_log
from .learner import (
    LearnerConfig,
    evaluate,
    evidence_from_logits,
    fit_temperatures,
    forward,
    init_model,
    save_params,
    train,
)
from .policy import (
    RewardState,
    StateBuilder,
    candidate_features,
    compute_reward,
    init_policy,
    policy_logits,
    reinforce_update,
    sample_batch,
    state_names,
)
from .selection import (
    STRATEGIES,
    PoolView,
    budgeted_kmeanspp,
    candidate_set,
    score_pool,
    select_baseline,
)
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger(__name__)

METHOD = "rl-mba"
MAX_SHAPLEY_MODALITIES = 10


@dataclass(frozen=True)
class PoolPartition:
    labeled: np.ndarray
    unlabeled: np.ndarray
    validation: np.ndarray

    def check(self, n_total: int) -> None:
        sets = [set(self.labeled.tolist()), set(self.unlabeled.tolist()), set(self.validation.tolist())]
        if any(a & b for a, b in itertools.combinations(sets, 2)):
            raise AssertionError("pool partition overlaps")
        if sum(len(s) for s in sets) != n_total:
            raise AssertionError("pool partition does not cover the dataset")


def _largest_remainder(counts: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation of ``total`` proportional to ``counts``."""
    if total == 0 or counts.sum() == 0:
        return np.zeros_like(counts)
    exact = counts * total / counts.sum()
    alloc = np.floor(exact).astype(int)
    short = total - alloc.sum()
    order = np.lexsort((np.arange(len(counts)), -(exact - alloc)))
    for i in order[:short]:
        alloc[i] += 1
    return np.minimum(alloc, counts)


def stratified_split(data: MultimodalDataset, val_fraction: float, seed_size: int, rng: RngStream) -> PoolPartition:
    """Fixed validation split plus a seed labeled set, both class-stratified.

    Each class contributes ``round(n_c * val_fraction)`` validation members
    (at least one). The seed set of ``seed_size`` ids is split across classes
    in proportion to what remains; everything else is unlabeled.
    """
    if not 0.0 < val_fraction < 1.0:
        raise InvalidInputError("val_fraction must be in (0, 1); an empty validation split is not allowed")
    labels = data.labels
    if np.any(labels < 0):
        raise InvalidInputError("splitting needs every instance labeled")
    counts = np.bincount(labels, minlength=data.n_classes)
    if np.any(counts == 0):
        raise InvalidInputError(f"classes {np.flatnonzero(counts == 0).tolist()} have no samples")
    if np.any(counts < 2):
        raise InvalidInputError("every class needs at least two samples")
    g = rng.generator
    val, rest_by_class = [], []
    for c in range(data.n_classes):
        ids = np.sort(data.ids[labels == c])
        ids = ids[g.permutation(ids.size)]
        n_val = min(max(int(round(ids.size * val_fraction)), 1), ids.size - 1)
        val.append(ids[:n_val])
        rest_by_class.append(ids[n_val:])
    remaining = np.array([r.size for r in rest_by_class])
    if seed_size > remaining.sum():
        raise InvalidInputError("seed set larger than the non-validation data")
    seed_alloc = _largest_remainder(remaining, seed_size)
    labeled = [r[:k] for r, k in zip(rest_by_class, seed_alloc)]
    unlabeled = [r[k:] for r, k in zip(rest_by_class, seed_alloc)]
    return PoolPartition(
        labeled=np.sort(np.concatenate(labeled)),
        unlabeled=np.sort(np.concatenate(unlabeled)),
        validation=np.sort(np.concatenate(val)),
    )


@dataclass(frozen=True)
class ShapleyReport:
    phi: np.ndarray
    values: dict   # frozenset of modality indices -> validation top1

    def as_dict(self) -> dict:
        return {
            "phi": self.phi.tolist(),
            "values": {",".join(str(i) for i in sorted(s)) or "-": v for s, v in
                       sorted(self.values.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))},
        }


def shapley_from_values(values: dict, m: int) -> np.ndarray:
    """Exact Shapley attribution for a game given on all ``2^m`` coalitions."""
    phi = np.zeros(m)
    players = range(m)
    for i in players:
        others = [j for j in players if j != i]
        for size in range(m):
            weight = math.factorial(size) * math.factorial(m - 1 - size) / math.factorial(m)
            for coal in itertools.combinations(others, size):
                s = frozenset(coal)
                phi[i] += weight * (values[s | {i}] - values[s])
    return phi


def shapley_contributions(params, validation: MultimodalDataset, temps, w) -> ShapleyReport:
    """Per-modality Shapley share of the multimodal head's validation top-1.

    A coalition is scored by masking fusion weights to its members and
    renormalizing; the empty coalition scores the majority-class rate.
    """
    if len(validation) == 0:
        raise PreconditionError("validation set is empty")
    m = len(params.enc_w)
    if m > MAX_SHAPLEY_MODALITIES:
        raise InvalidInputError(f"exact Shapley refused for M={m} > {MAX_SHAPLEY_MODALITIES}")
    counts = np.bincount(validation.labels, minlength=validation.n_classes)
    values = {frozenset(): float(counts.max() / counts.sum())}
    for size in range(1, m + 1):
        for coal in itertools.combinations(range(m), size):
            ev = evaluate(params, validation, temps, w, mask=coal)
            values[frozenset(coal)] = ev.multimodal.top1
    return ShapleyReport(phi=shapley_from_values(values, m), values=values)


@dataclass
class EpisodeLog:
    records: list

    @property
    def rounds(self) -> list:
        return [r for r in self.records if r.get("type") == "round"]

    @property
    def summary(self) -> dict:
        return next(r for r in self.records if r.get("type") == "summary")

    def curve(self) -> dict:
        return {r["round"]: r["g"]["top1"] for r in self.rounds}

    def write(self, path) -> None:
        write_episode_log(path, self.records)


def synthetic_spec(config: ExperimentConfig) -> SyntheticSpec:
    d = config.data
    return SyntheticSpec(
        n_modalities=d.n_modalities, n_classes=d.n_classes, n_samples=d.n_samples,
        dims=tuple(d.dims), informativeness=tuple(d.informativeness), noise=d.noise,
        separation=d.separation, drift=d.drift, drift_threshold=d.drift_threshold,
    )


def load_dataset(config: ExperimentConfig) -> MultimodalDataset:
    if config.data.path:
        return read_dataset(config.data.path)
    return generate_synthetic(synthetic_spec(config), RngStream(config.al.seed, "data"))


def learner_config(config: ExperimentConfig, data: MultimodalDataset) -> LearnerConfig:
    lc = config.learner
    return LearnerConfig(
        dims=data.dims, n_classes=data.n_classes, hidden_dim=lc.hidden_dim,
        learning_rate=lc.lr, epochs=lc.epochs, weight_decay=lc.weight_decay,
        kl_coeff=lc.kl_coeff, warm_start=config.al.warm_start,
    )


class _Stopwatch:
    def __init__(self):
        self.times = {}

    def stage(self, name):
        watch = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                watch.times[name] = watch.times.get(name, 0.0) + time.perf_counter() - self.t0

        return _Ctx()

    def rounded(self) -> dict:
        return {k: round(self.times.get(k, 0.0), 3) for k in TIMING_KEYS}


def run_episode(
    config: ExperimentConfig,
    dataset: MultimodalDataset | None = None,
    curves: dict | None = None,
    out_dir=None,
    strategy: str = METHOD,
) -> EpisodeLog:
    """Run one active-learning episode and return its log.

    With ``strategy="rl-mba"`` each round clusters the fused pool, scores it
    by weighted evidential uncertainty and diversity, lets the policy draw the
    batch from the top candidates, retrains, rewards and updates the policy,
    and finally re-estimates modality weights. Any name from
    ``selection.STRATEGIES`` swaps the selection stage for that baseline;
    baselines keep uniform fusion weights and skip the policy.

    ``curves`` (strategy -> {round: top1}) feed the relative reward; when
    omitted they are read from ``config.reward.curves``. If ``out_dir`` is
    given the log (and checkpoints, when enabled) are written there.
    """
    config.validate()
    is_method = strategy == METHOD
    if not is_method and strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    data = dataset if dataset is not None else load_dataset(config)
    m = data.n_modalities
    b, rounds = config.al.budget, config.al.rounds
    seed = config.al.seed

    def stream(label):
        return RngStream(seed, label)

    part = stratified_split(data, config.data.val_fraction, config.al.seed_size, stream("split"))
    if len(part.unlabeled) < b * rounds:
        raise BudgetExhaustedError(
            f"{rounds} rounds of {b} need {b * rounds} unlabeled instances, pool has {len(part.unlabeled)}"
        )
    if is_method and config.reward.mode == "relative":
        if curves is None:
            curves = read_curves(config.reward.curves) if config.reward.curves else {}
        if not curves:
            raise ConfigError(
                    "relative reward needs baseline curves (reward.curves); "
                    "produce one with the baseline command or pick another reward mode"
                )
        for name, curve in curves.items():
            if any(t not in curve for t in range(1, rounds + 1)):
                raise ConfigError(f"baseline curve {name!r} does not cover rounds 1..{rounds}")

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    lcfg = learner_config(config, data)
    validation = data.take(data.rows_for_ids(part.validation))
    labeled_ids = set(part.labeled.tolist())
    unlabeled_ids = set(part.unlabeled.tolist())

    def labeled_set():
        return data.take(data.rows_for_ids(sorted(labeled_ids)))

    w = amcb.uniform_weights(m)
    params = init_model(lcfg, stream("init"))
    params, diag = train(params, labeled_set(), lcfg, w)
    temps = fit_temperatures(params, validation)
    ev = evaluate(params, validation, temps, w)
    delta = amcb.contribution_gaps(ev.modality_top1, ev.multimodal.top1)
    if is_method:
        w = amcb.update_weights(delta, config.amcb.tau, config.amcb.epsilon)
    initial = {"top1": ev.multimodal.top1, "delta": delta.tolist(), "w": w.tolist()}
    reward_state = RewardState.initial(ev.multimodal.top1)

    theta = None
    builder = StateBuilder()
    if is_method:
        theta = init_policy(len(state_names(m)) + m + 3, stream("policy_init"), config.policy.hidden)

    records = []
    for t in range(1, rounds + 1):
        watch = _Stopwatch()
        w_select = w.copy()
        with watch.stage("Pred"):
            pool = data.take(data.rows_for_ids(sorted(unlabeled_ids)))
            fwd = forward(params, pool, w)
            alphas = evidence_from_logits(fwd.logits, temps)
        policy_info = None
        with watch.stage("Sel"):
            if is_method:
                centroids = budgeted_kmeanspp(fwd.fused, b, stream(f"kmeans/{t}"), config.select.kmeans_iters)
                scored = score_pool(pool.ids, alphas, fwd.fused, w, centroids, config.select.beta)
                cands = candidate_set(scored, b, config.select.kappa)
                state = builder.build(ev.multimodal, delta, w, scored, diag)
                cand_feats = candidate_features(scored, cands.rows)
                logits = policy_logits(theta, state, cand_feats)
                action = sample_batch(logits, b, stream(f"policy_sample/{t}"), ids=cands.ids)
                chosen = action.ids
                n_candidates = len(cands)
            else:
                labeled_fused = forward(params, labeled_set(), w).fused
                view = PoolView(
                    ids=pool.ids,
                    fused_features=fwd.fused,
                    fused_probs=expected_probabilities(fuse_evidence(alphas, w)),
                    mm_probs=softmax(fwd.mm_logits),
                    labeled_features=labeled_fused,
                )
                chosen = select_baseline(strategy, view, b, stream(f"baseline/{strategy}/{t}"))
                n_candidates = len(pool)

        chosen_list = [int(i) for i in chosen]
        if len(set(chosen_list)) != b or not set(chosen_list) <= unlabeled_ids:
            raise AssertionError("selected batch is not a distinct subset of the pool")
        labeled_ids.update(chosen_list)
        unlabeled_ids.difference_update(chosen_list)
        PoolPartition(
            labeled=np.array(sorted(labeled_ids)), unlabeled=np.array(sorted(unlabeled_ids)),
            validation=part.validation,
        ).check(len(data))

        with watch.stage("Train"):
            if not config.al.warm_start:
                params = init_model(lcfg, stream(f"init/{t}"))
            params, diag = train(params, labeled_set(), lcfg, w)
        with watch.stage("Val"):
            temps = fit_temperatures(params, validation)
            ev = evaluate(params, validation, temps, w)
        trace = None
        with watch.stage("Policy Update"):
            if is_method:
                trace, reward_state = compute_reward(
                    ev.multimodal.top1, t, curves, config.reward.mode, config.reward.ema,
                    reward_state, config.policy.clip,
                )
                theta = reinforce_update(theta, state, cand_feats, action, trace, config.policy.lr)
                policy_info = {
                    "log_prob": action.log_prob,
                    "step_log_probs": action.step_log_probs.tolist(),
                    "state": state.tolist(),
                }
        delta = amcb.contribution_gaps(ev.modality_top1, ev.multimodal.top1)
        shap = shapley_contributions(params, validation, temps, w)
        if is_method:
            w = amcb.update_weights(delta, config.amcb.tau, config.amcb.epsilon)

        checkpoint = None
        if out is not None and config.output.checkpoints:
            ckpt_dir = out / "checkpoints"
            ckpt_dir.mkdir(exist_ok=True)
            checkpoint = f"checkpoints/{strategy}_round{t:03d}.npz"
            save_params(out / checkpoint, params)

        records.append({
            "type": "round",
            "round": t,
            "strategy": strategy,
            "labeled_size": len(labeled_ids),
            "w_select": w_select.tolist(),
            "w": w.tolist(),
            "delta": delta.tolist(),
            "g": ev.multimodal.as_dict(),
            "per_modality_top1": ev.modality_top1.tolist(),
            "temperatures": np.asarray(temps).tolist(),
            "reward": None if trace is None else trace.as_dict(),
            "selected": chosen_list,
            "candidate_size": n_candidates,
            "policy": policy_info,
            "diagnostics": {"loss_slope": diag.loss_slope, "grad_norm": diag.grad_norm},
            "phi": shap.phi.tolist(),
            "shapley_values": shap.as_dict()["values"],
            "timings": watch.rounded(),
            "checkpoint": checkpoint,
        })
        log.info("%s round %d: top1=%.4f w=%s", strategy, t, ev.multimodal.top1, np.round(w, 3))

    records.append({
        "type": "summary",
        "strategy": strategy,
        "reward_mode": config.reward.mode if is_method else None,
        "seed": seed,
        "rounds": rounds,
        "budget": b,
        "initial": initial,
        "final_top1": ev.multimodal.top1,
        "final_w": w.tolist(),
        "labeled_size": len(labeled_ids),
        "gamma": config.al.gamma,
        "config": config.to_dict(),
    })
    episode = EpisodeLog(records)
    if out is not None:
        name = METHOD if is_method else strategy
        episode.write(out / f"{name}.jsonl")
    return episode


def run_baseline_episode(
    config: ExperimentConfig,
    strategy: str,
    dataset: MultimodalDataset | None = None,
    out_dir=None,
) -> tuple:
    """Run a classical strategy under the same protocol and emit its curve.

    Returns ``(log, curve)``; with ``out_dir`` the curve is also written to
    ``<out_dir>/<strategy>.csv`` for use as a relative-reward baseline.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    episode = run_episode(config, dataset=dataset, out_dir=out_dir, strategy=strategy)
    curve = episode.curve()
    if out_dir is not None:
        write_curve(Path(out_dir) / f"{strategy}.csv", curve)
    return episode, curve
