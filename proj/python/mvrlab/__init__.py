"""Multi-view relevance reward shaping (C++ core)."""

from ._mvrlab import (
    ConfigError,
    InvalidArgument,
    NumericFailure,
    RelevanceModel,
    binary_cross_entropy,
    decay_metric,
    env_reset,
    env_step,
    env_success,
    h_vid,
    jensen_gap,
    log_sigmoid,
    metrics_header,
    pearson,
    r_mvr,
    resolve_config,
    sigmoid,
    train,
)

__all__ = [
    "ConfigError",
    "InvalidArgument",
    "NumericFailure",
    "RelevanceModel",
    "binary_cross_entropy",
    "decay_metric",
    "env_reset",
    "env_step",
    "env_success",
    "h_vid",
    "jensen_gap",
    "log_sigmoid",
    "metrics_header",
    "pearson",
    "r_mvr",
    "resolve_config",
    "sigmoid",
    "train",
]
