"""Python bindings for the MIRA trainer."""

from ._core import (
    ConfigError,
    config_keys,
    config_text,
    final_return,
    gae,
    goal_alignment,
    read_metrics,
    schedule,
    shaped_advantage,
    tokenize_subgoal,
    train,
)

__all__ = [
    "ConfigError",
    "config_keys",
    "config_text",
    "final_return",
    "gae",
    "goal_alignment",
    "read_metrics",
    "schedule",
    "shaped_advantage",
    "tokenize_subgoal",
    "train",
]
