"""
Custom exceptions for the CoNNS toolkit.
"""

from typing import Optional


class ConnsError(Exception):
    """Base exception for all toolkit errors."""


class ConfigError(ConnsError):
    """Raised for configuration-related errors."""


class ArgumentError(ConnsError, ValueError):
    """Raised when an operation receives inputs of the wrong shape or range."""


class UsageError(ConnsError):
    """Raised when a command is run without its prerequisites."""


class NumericError(ConnsError):
    """Raised when a matrix decomposition fails."""


class SolverError(ConnsError):
    """Raised when a Newton or fixed-point solve fails."""

    def __init__(self, message: str, time_index: Optional[int] = None, trajectory_id: Optional[int] = None):
        super().__init__(message)
        self.time_index = time_index
        self.trajectory_id = trajectory_id

    def __str__(self) -> str:
        where = []
        if self.trajectory_id is not None:
            where.append(f"trajectory {self.trajectory_id}")
        if self.time_index is not None:
            where.append(f"time index {self.time_index}")
        base = super().__str__()
        return f"{base} ({', '.join(where)})" if where else base


class NonConvergenceError(SolverError):
    """Raised when an iteration exhausts its budget under an abort policy."""


class TrainingError(ConnsError):
    """Raised for errors during network training."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class FormatError(ConnsError):
    """Raised when a dataset or checkpoint file cannot be decoded."""

    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(message if offset is None else f"{message} at byte offset {offset}")
        self.offset = offset
