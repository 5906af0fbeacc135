"""Exception types shared across modules."""

from __future__ import annotations


class DivergenceError(RuntimeError):
    """A simulated state left the ``1e6`` guard band."""

    def __init__(self, message: str, step: int | None = None, time: float | None = None):
        super().__init__(message)
        self.step = step
        self.time = time


class ConfigError(ValueError):
    """An experiment configuration failed parsing or validation."""


class RootNotConverged(RuntimeError):
    """Newton iteration on the dispersion relation did not converge."""

    def __init__(self, message: str, last: complex, residual: float):
        super().__init__(message)
        self.last = last
        self.residual = residual
