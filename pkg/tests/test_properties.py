"""Property checks that run on their own: ``pytest tests/test_properties.py``."""

from __future__ import annotations

import math

import numpy as np
import pytest

from delayfield.core import (
    Dirac,
    Empirical,
    IntervalAveraged,
    ModelConfig,
    SigmoidKind,
    SigmoidSpec,
    Uniform,
    delay_laplace,
    delay_quadrature,
    quadrature_laplace,
)
from delayfield.grid import SimGrid
from delayfield.meanfield import integrate_moments
from delayfield.network import ChaoticGaussian, build_realization, simulate_network

LAWS = [
    Uniform(1.5, 0.6),
    Uniform(1.0, 2.0),
    Uniform(0.8, 0.0),
    IntervalAveraged(1.0, 1.1),
    IntervalAveraged(3.5, 1.1),
    IntervalAveraged(0.1, 0.0),
]


def _random_config(rng: np.random.Generator) -> ModelConfig:
    kind = rng.integers(3)
    if kind == 0:
        law = Dirac(rng.uniform(0.2, 2.0))
    elif kind == 1:
        mean = rng.uniform(0.5, 2.0)
        law = Uniform(mean, rng.uniform(0, 2 * mean))
    else:
        law = IntervalAveraged(rng.uniform(0.1, 2.0), rng.uniform(0, 1.5))
    return ModelConfig.one_population(
        theta=rng.uniform(0.3, 3.0),
        lam=rng.uniform(0, 1.5),
        input=rng.uniform(-0.5, 0.5),
        j_bar=rng.uniform(-5, 5),
        sigma=rng.uniform(0, 1.5),
        delay=law,
        sigmoid=SigmoidSpec(SigmoidKind.ERF_UNIT_SLOPE, rng.uniform(0.3, 3.0)),
    )


@pytest.mark.parametrize("law", LAWS, ids=lambda law: repr(law))
def test_laplace_agrees_with_quadrature(law):
    rng = np.random.default_rng(0)
    xis = rng.uniform(0, 3, 200) + 1j * rng.uniform(-10, 10, 200)
    err = max(abs(delay_laplace(law, x) - quadrature_laplace(law, x)) for x in xis)
    assert err < 1e-8


@pytest.mark.parametrize("law", LAWS + [Dirac(1.2), Empirical((0.3, 0.9, 1.4))], ids=lambda law: repr(law))
@pytest.mark.parametrize("n", [1, 4, 16, 64])
def test_quadrature_mass_normalized(law, n):
    total = math.fsum(w for _, w in delay_quadrature(law, n))
    assert abs(total - 1.0) < 1e-12


def test_variance_nonnegative_random_configs():
    rng = np.random.default_rng(2024)
    worst = math.inf
    for _ in range(50):
        cfg = _random_config(rng)
        hist = (rng.uniform(-1, 1), rng.uniform(0, 1))
        traj = integrate_moments(cfg, SimGrid(1e-2, 20.0), history=hist)
        worst = min(worst, float(traj.v.min()))
    assert worst >= 0.0


def test_moment_integrator_byte_identical():
    cfg = ModelConfig.one_population(theta=1.0, lam=0.5, j_bar=-2.0, sigma=0.5, delay=Uniform(1.5, 0.6))
    a = integrate_moments(cfg, SimGrid(1e-2, 30.0), history=(0.3, 0.1))
    b = integrate_moments(cfg, SimGrid(1e-2, 30.0), history=(0.3, 0.1))
    assert a.mu.tobytes() == b.mu.tobytes() and a.v.tobytes() == b.v.tobytes()


def test_network_byte_identical():
    cfg = ModelConfig.one_population(theta=1.0, lam=0.5, j_bar=-2.0, sigma=0.5, delay=IntervalAveraged(1.0, 0.5))
    grid = SimGrid(1e-2, 5.0)
    runs = []
    for _ in range(2):
        real = build_realization(cfg, [64], seed=3)
        runs.append(simulate_network(cfg, real, grid, ChaoticGaussian(0.1, 0.1), seed=5))
    assert runs[0].states.tobytes() == runs[1].states.tobytes()
    assert runs[0].pop_stats.tobytes() == runs[1].pop_stats.tobytes()


def _smooth_history(cfg: ModelConfig, t0: float):
    # a constant history puts a kink at t=0 that off-grid delay nodes replay later;
    # restarting from a settled trajectory gives a history smooth across t=0
    warm = integrate_moments(cfg, SimGrid(1e-3, t0), history=(0.3, 0.125))
    return lambda s: tuple(float(a[0]) for a in warm.at(t0 + s))


@pytest.mark.parametrize(
    "law, t0",
    [(Dirac(1.0), None), (Uniform(1.5, 0.6), 12.0), (IntervalAveraged(1.0, 0.5), 6.0)],
    ids=["dirac", "uniform", "interval"],
)
def test_step_halving_order(law, t0):
    cfg = ModelConfig.one_population(theta=1.0, lam=0.5, j_bar=-2.0, sigma=0.5, delay=law)
    hist = (0.3, 0.125) if t0 is None else _smooth_history(cfg, t0)
    ref_dt = 0.04
    sols = []
    for dt in (0.04, 0.02, 0.01):
        traj = integrate_moments(cfg, SimGrid(dt, 10.0), history=hist)
        k = int(round(ref_dt / dt))
        sols.append(np.column_stack([traj.mu[traj.history_len::k, 0], traj.v[traj.history_len::k, 0]]))
    diffs = [np.max(np.abs(sols[i] - sols[i + 1])) for i in range(2)]
    order = math.log2(diffs[0] / diffs[1])
    assert order >= 3.5, f"observed order {order:.2f}"
