"""Multimodal active learning with balanced fusion weights, evidential
difficulty scores and a reinforcement-learned batch selection policy."""

from .amcb import contribution_gaps, uniform_weights, update_weights
from .config import ExperimentConfig, load_config
from .core import (
    BudgetExhaustedError,
    ConfigError,
    InvalidInputError,
    MetricsReport,
    MultimodalDataset,
    NumericalError,
    PreconditionError,
    RngStream,
)
from .efda import dirichlet_uncertainty, fuse_evidence
from .harness import EpisodeLog, run_baseline_episode, run_episode, shapley_contributions
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "BudgetExhaustedError",
    "ConfigError",
    "EpisodeLog",
    "ExperimentConfig",
    "InvalidInputError",
    "MetricsReport",
    "MultimodalDataset",
    "NumericalError",
    "PreconditionError",
    "RngStream",
    "SyntheticSpec",
    "contribution_gaps",
    "dirichlet_uncertainty",
    "fuse_evidence",
    "generate_synthetic",
    "load_config",
    "run_baseline_episode",
    "run_episode",
    "shapley_contributions",
    "uniform_weights",
    "update_weights",
]
