"""Experiment configuration: typed sections, a ``key = value`` file format
and dotted ``section.key=value`` overrides.

Example file::

    [al]
    seed = 3
    budget = 30

    [reward]
    mode = absolute
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .core import ConfigError


@dataclass
class DataSection:
    path: str = ""
    n_modalities: int = 2
    n_classes: int = 6
    n_samples: int = 3000
    dims: tuple[int, ...] = (8, 32)
    informativeness: tuple[float, ...] = (1.0, 1.0)
    noise: float = 1.0
    separation: float = 3.0
    drift: bool = False
    drift_threshold: int = 3
    val_fraction: float = 0.2


@dataclass
class ALSection:
    seed: int = 0
    seed_size: int = 60
    budget: int = 30
    rounds: int = 10
    gamma: float = 0.99
    warm_start: bool = True


@dataclass
class LearnerSection:
    hidden_dim: int = 32
    lr: float = 0.5
    epochs: int = 30
    weight_decay: float = 0.01
    kl_coeff: float = 0.01


@dataclass
class AMCBSection:
    tau: float = 0.5
    epsilon: float = 0.05


@dataclass
class SelectSection:
    beta: float = 1.0
    kappa: float = 5.0
    kmeans_iters: int = 5


@dataclass
class RewardSection:
    mode: str = "relative"
    ema: float = 0.9
    curves: tuple[str, ...] = ()


@dataclass
class PolicySection:
    lr: float = 1e-2
    clip: float = 1.0
    hidden: int = 64


@dataclass
class OutputSection:
    checkpoints: bool = False


@dataclass
class ExperimentConfig:
    data: DataSection = field(default_factory=DataSection)
    al: ALSection = field(default_factory=ALSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    amcb: AMCBSection = field(default_factory=AMCBSection)
    select: SelectSection = field(default_factory=SelectSection)
    reward: RewardSection = field(default_factory=RewardSection)
    policy: PolicySection = field(default_factory=PolicySection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "ExperimentConfig":
        al, d = self.al, self.data
        if al.budget < 1 or al.rounds < 1:
            raise ConfigError("al.budget and al.rounds must be >= 1")
        if al.seed_size < 1:
            raise ConfigError("al.seed_size must be >= 1")
        if not 0.0 < d.val_fraction < 1.0:
            raise ConfigError("data.val_fraction must be in (0, 1); a validation split is required")
        if self.amcb.tau <= 0 or self.amcb.epsilon < 0:
            raise ConfigError("amcb.tau must be > 0 and amcb.epsilon >= 0")
        if self.select.beta < 0 or self.select.kappa < 1:
            raise ConfigError("select.beta must be >= 0 and select.kappa >= 1")
        if not 1 <= self.select.kmeans_iters <= 5:
            raise ConfigError("select.kmeans_iters must be in [1, 5]")
        if self.reward.mode not in ("relative", "absolute", "incremental"):
            raise ConfigError(f"reward.mode must be relative, absolute or incremental, not {self.reward.mode!r}")
        if not 0.0 <= self.reward.ema < 1.0:
            raise ConfigError("reward.ema must be in [0, 1)")
        if self.policy.clip <= 0 or self.policy.hidden < 1:
            raise ConfigError("policy.clip must be > 0 and policy.hidden >= 1")
        if self.learner.lr <= 0 or self.learner.epochs < 1:
            raise ConfigError("learner.lr must be > 0 and learner.epochs >= 1")
        if not d.path:
            if len(d.dims) != d.n_modalities or len(d.informativeness) != d.n_modalities:
                raise ConfigError("data.dims and data.informativeness need one entry per modality")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _section_types(section_cls) -> dict:
    hints = typing.get_type_hints(section_cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(section_cls)}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(text: str, kind):
    text = text.strip()
    if kind is bool:
        return _parse_bool(text)
    if kind in (int, float, str):
        return kind(text)
    if typing.get_origin(kind) is tuple:
        inner = typing.get_args(kind)[0]
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(_convert(p, inner) for p in parts)
    raise TypeError(f"unsupported config type {kind!r}")


def set_value(config: ExperimentConfig, dotted: str, text: str) -> None:
    """Apply one ``section.key`` override, type-checked against the schema."""
    if "." not in dotted:
        raise ConfigError(f"override key {dotted!r} must look like section.key")
    section_name, key = dotted.split(".", 1)
    section = getattr(config, section_name, None)
    if section is None or not dataclasses.is_dataclass(section):
        raise ConfigError(f"unknown config section {section_name!r}")
    types = _section_types(type(section))
    if key not in types:
        raise ConfigError(f"unknown config key {dotted!r}")
    try:
        value = _convert(text, types[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {dotted}: {text!r} ({exc})") from exc
    setattr(section, key, value)


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    config = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        for section_name in parser.sections():
            for key, text in parser.items(section_name):
                set_value(config, f"{section_name}.{key}", text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must be key=value")
        key, text = item.split("=", 1)
        set_value(config, key.strip(), text)
    return config.validate()


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        section = getattr(config, f.name)
        lines.append(f"[{f.name}]")
        for key, value in dataclasses.asdict(section).items():
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def write_config(path, config: ExperimentConfig) -> None:
    Path(path).write_text(dump_config(config), encoding="utf-8")
