"""Seed-swept experiments: the modality-drift study and the reward-mode ablation."""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .config import ExperimentConfig, set_value
from .core import ConfigError
from .harness import EpisodeLog, load_dataset, run_baseline_episode, run_episode
from .policy import REWARD_MODES

# Modality 0 carries classes below the threshold, modality 1 the rest. The
# second modality is wide, so its head needs more labels before it pays off
# and its share of the fusion should grow over the episode.
DRIFT_OVERRIDES = {
    "data.n_modalities": "2",
    "data.n_classes": "6",
    "data.n_samples": "3000",
    "data.dims": "4,64",
    "data.informativeness": "1.0,0.0",
    "data.drift": "true",
    "data.drift_threshold": "3",
    "al.seed_size": "60",
    "al.budget": "30",
    "al.rounds": "10",
}
DRIFT_TRACKED_MODALITY = 1
SIGN_TEST_ALPHA = 0.1
WEIGHT_INCREASE_SHARE = 0.8


def with_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    out = copy.deepcopy(config)
    for key, text in overrides.items():
        set_value(out, key, text)
    return out.validate()


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    out = copy.deepcopy(config)
    out.al.seed = int(seed)
    return out


def drift_config(base: ExperimentConfig | None = None) -> ExperimentConfig:
    return with_overrides(base if base is not None else ExperimentConfig(), DRIFT_OVERRIDES)


@dataclass(frozen=True)
class DriftSeedResult:
    seed: int
    random_top1: float
    method_top1: float
    w_first: float
    w_last: float

    @property
    def weight_increased(self) -> bool:
        return self.w_last > self.w_first


@dataclass(frozen=True)
class DriftReport:
    results: tuple
    tracked_modality: int

    @property
    def wins(self) -> int:
        return sum(r.method_top1 > r.random_top1 for r in self.results)

    @property
    def losses(self) -> int:
        return sum(r.method_top1 < r.random_top1 for r in self.results)

    @property
    def mean_random(self) -> float:
        return float(np.mean([r.random_top1 for r in self.results]))

    @property
    def mean_method(self) -> float:
        return float(np.mean([r.method_top1 for r in self.results]))

    @property
    def sign_test_p(self) -> float:
        """One-sided sign test of method > random; tied seeds are dropped."""
        n = self.wins + self.losses
        if n == 0:
            return 1.0
        return float(binomtest(self.wins, n, 0.5, alternative="greater").pvalue)

    @property
    def weight_increases(self) -> int:
        return sum(r.weight_increased for r in self.results)

    @property
    def accuracy_ok(self) -> bool:
        return self.mean_method >= self.mean_random and self.sign_test_p < SIGN_TEST_ALPHA

    @property
    def weight_ok(self) -> bool:
        return self.weight_increases >= math.ceil(WEIGHT_INCREASE_SHARE * len(self.results))

    def as_rows(self) -> list:
        return [
            {"seed": r.seed, "random_top1": r.random_top1, "method_top1": r.method_top1,
             "w_first": r.w_first, "w_last": r.w_last}
            for r in self.results
        ]


def drift_experiment(
    config: ExperimentConfig,
    seeds,
    tracked_modality: int = DRIFT_TRACKED_MODALITY,
    out_dir=None,
) -> DriftReport:
    """Paired random vs method episodes per seed on the same data and split.

    The method's relative reward is measured against that seed's random
    curve. The tracked weight is the post-update fusion weight of
    ``tracked_modality`` after round 1 and after the final round.
    """
    results = []
    for seed in seeds:
        cfg = with_seed(config, seed)
        cfg.reward.mode = "relative"
        data = load_dataset(cfg)
        sub = None if out_dir is None else Path(out_dir) / f"seed{seed}"
        rnd, curve = run_baseline_episode(cfg, "random", dataset=data, out_dir=sub)
        method = run_episode(cfg, dataset=data, curves={"random": curve}, out_dir=sub)
        rounds = method.rounds
        results.append(DriftSeedResult(
            seed=int(seed),
            random_top1=float(rnd.summary["final_top1"]),
            method_top1=float(method.summary["final_top1"]),
            w_first=float(rounds[0]["w"][tracked_modality]),
            w_last=float(rounds[-1]["w"][tracked_modality]),
        ))
    return DriftReport(results=tuple(results), tracked_modality=tracked_modality)


@dataclass(frozen=True)
class AblationResult:
    logs: dict          # (mode, seed) -> EpisodeLog
    baseline: str

    @property
    def modes(self) -> list:
        return sorted({m for m, _ in self.logs}, key=REWARD_MODES.index)

    def table(self) -> list:
        """One row per mode, seed and round with accuracy and reward trace."""
        rows = []
        for (mode, seed), episode in sorted(self.logs.items(), key=lambda kv: (REWARD_MODES.index(kv[0][0]), kv[0][1])):
            for r in episode.rounds:
                reward = r.get("reward") or {}
                rows.append({
                    "mode": mode, "seed": seed, "round": r["round"],
                    "labeled_size": r["labeled_size"], "top1": r["g"]["top1"],
                    "reward_raw": reward.get("raw"), "advantage": reward.get("advantage"),
                })
        return rows

    def mean_curves(self) -> dict:
        """mode -> {round: mean top1 across seeds}."""
        out = {}
        for mode in self.modes:
            curves = [ep.curve() for (m, _), ep in self.logs.items() if m == mode]
            rounds = sorted(curves[0])
            out[mode] = {t: float(np.mean([c[t] for c in curves])) for t in rounds}
        return out


def reward_ablation(
    config: ExperimentConfig,
    seeds,
    modes=REWARD_MODES,
    baseline: str = "random",
) -> AblationResult:
    """Run the method once per reward mode and seed on identical data.

    Each seed's ``baseline`` curve is computed once and shared by every
    mode (only the relative mode reads it).
    """
    for mode in modes:
        if mode not in REWARD_MODES:
            raise ConfigError(f"unknown reward mode {mode!r}")
    logs = {}
    for seed in seeds:
        cfg = with_seed(config, seed)
        data = load_dataset(cfg)
        _, curve = run_baseline_episode(cfg, baseline, dataset=data)
        for mode in modes:
            mcfg = copy.deepcopy(cfg)
            mcfg.reward.mode = mode
            logs[(mode, int(seed))] = run_episode(mcfg, dataset=data, curves={baseline: curve})
    return AblationResult(logs=logs, baseline=baseline)


def zero_curves(rounds: int) -> dict:
    return {"zero": {t: 0.0 for t in range(1, rounds + 1)}}


def reward_traces(episode: EpisodeLog) -> list:
    """Per-round reward traces without the mode label, for cross-mode comparison."""
    return [{k: v for k, v in (r["reward"] or {}).items() if k != "mode"} for r in episode.rounds]


def write_rows(path, rows: list) -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
