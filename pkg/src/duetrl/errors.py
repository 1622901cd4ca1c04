"""Shared exception types."""

from __future__ import annotations


class ContractViolationError(ValueError):
    """An API precondition was violated (shape/dimension/argument misuse)."""


class SimulationFaultError(RuntimeError):
    """Non-finite value entered the simulation."""

    def __init__(self, message: str, joint_index: int | None = None):
        super().__init__(message)
        self.joint_index = joint_index


class ConfigError(ValueError):
    """Invalid run configuration; `key` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class CheckpointError(IOError):
    """Checkpoint file missing or malformed."""
