"""Rank environment states by how much a policy's decisions there matter."""

from ._core import (
    ConfigError,
    ContractViolation,
    UnsupportedEnvironment,
    act_message,
    rank,
    reset_message,
    retained_count,
    run_rank,
    run_sweep,
    score,
)

__all__ = [
    "ConfigError",
    "ContractViolation",
    "UnsupportedEnvironment",
    "act_message",
    "rank",
    "reset_message",
    "retained_count",
    "run_rank",
    "run_sweep",
    "score",
]
