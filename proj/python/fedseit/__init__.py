"""Federated continual text classification with selective inter-client transfer."""

from ._fedseit import (
    ConfigError,
    DataError,
    ShapeError,
    aggregate,
    canonical_config,
    compose,
    conv1d_maxpool,
    evaluate_checkpoints,
    kmeans,
    micro_accuracy,
    read_transcript,
    replay_global,
    run_experiment,
    run_experiment_text,
    score_overlap,
    select_top_k,
    split,
    tokenize,
)

__all__ = [
    "ConfigError",
    "DataError",
    "ShapeError",
    "aggregate",
    "canonical_config",
    "compose",
    "conv1d_maxpool",
    "evaluate_checkpoints",
    "kmeans",
    "micro_accuracy",
    "read_transcript",
    "replay_global",
    "run_experiment",
    "run_experiment_text",
    "score_overlap",
    "select_top_k",
    "split",
    "tokenize",
]
