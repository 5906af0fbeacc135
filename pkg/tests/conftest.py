from __future__ import annotations

import pytest

from delayfield.core import Dirac, ModelConfig

# lines appended by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def base_config(tau: float = 1.0, lam: float = 0.5, sigma: float = 0.5) -> ModelConfig:
    return ModelConfig.one_population(theta=1.0, lam=lam, j_bar=-2.0, sigma=sigma, delay=Dirac(tau))


@pytest.fixture
def stationary_regime() -> ModelConfig:
    return base_config(tau=1.0)


@pytest.fixture
def oscillatory_regime() -> ModelConfig:
    return base_config(tau=1.5)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
