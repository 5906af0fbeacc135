"""Uniform time grids shared by the simulators."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SimGrid:
    """Fixed-step grid on ``[0, t_end]`` plus enough history for the delays."""

    dt: float = 1e-3
    t_end: float = 100.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValueError(f"t_end must be >= dt, got t_end={self.t_end}, dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def history_steps(self, tau_max: float) -> int:
        """Number of pre-zero grid steps, ``ceil(tau_max / dt)``."""
        return int(math.ceil(tau_max / self.dt - 1e-9)) if tau_max > 0 else 0

    def check_delays(self, tau_min: float, tau_max: float) -> None:
        if tau_max > 0 and self.dt > tau_max:
            raise ValueError(f"dt={self.dt} exceeds the largest delay {tau_max}; delays are unresolvable")
        if tau_min > 0 and self.dt > tau_min / 10 + 1e-15:
            raise ValueError(f"dt={self.dt} must be <= tau_min/10 = {tau_min / 10:.6g} for nearest-point delay lookup")
