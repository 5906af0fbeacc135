from __future__ import annotations

import math

import numpy as np
import pytest

from delayfield.bifurcation import DispersionContext, rightmost_root
from delayfield.core import Dirac, IntervalAveraged, ModelConfig, PopulationParams, Connectivity, Uniform
from delayfield.errors import DivergenceError
from delayfield.grid import SimGrid
from delayfield.meanfield import (
    Regime,
    classify_series,
    classify_trajectory,
    integrate_moments,
    meanfield_vs_network,
    moment_rhs,
    stationary_point,
)
from tests.conftest import base_config


@pytest.mark.parametrize("lam, j_bar", [(0.0, -2.0), (0.5, -2.0), (1.0, 3.0)])
def test_zero_mean_history_stays_zero(lam, j_bar):
    cfg = ModelConfig.one_population(theta=1.0, lam=lam, j_bar=j_bar, sigma=0.5, delay=Dirac(1.0))
    traj = integrate_moments(cfg, SimGrid(1e-2, 30.0), history=(0.0, 0.0))
    assert np.all(traj.mu == 0.0)
    assert traj.v[-1, 0] == pytest.approx(lam**2 / 2, abs=1e-10)
    assert np.all(np.diff(traj.v[traj.history_len:, 0]) >= -1e-15)


def test_stationary_regime_decays(stationary_regime):
    traj = integrate_moments(stationary_regime, SimGrid(1e-3, 100.0), history=(0.3, 0.125))
    mu, v = traj.at(100.0)
    assert abs(mu[0]) < 1e-5 and v[0] == pytest.approx(0.125, abs=1e-5)
    assert classify_trajectory(traj).regime is Regime.STATIONARY


def test_oscillatory_regime_pulsation(oscillatory_regime):
    traj = integrate_moments(oscillatory_regime, SimGrid(1e-3, 200.0), history=(0.01, 0.125))
    c = classify_trajectory(traj)
    assert c.is_oscillatory
    # the linearization's unstable root sets the oscillation frequency near onset
    root = rightmost_root(DispersionContext.from_config(oscillatory_regime))
    assert root.real > 0
    assert c.pulsation == pytest.approx(root.imag, rel=0.02)


def test_strong_noise_delays_onset():
    traj = integrate_moments(base_config(1.5, lam=1.0), SimGrid(1e-3, 200.0), history=(0.01, 0.5))
    assert classify_trajectory(traj).regime is Regime.STATIONARY


@pytest.mark.parametrize("lam, theta, v_star", [(0.5, 1.0, 0.125), (0.0, 2.0, 0.0), (1.0, 2.0, 1.0)])
def test_stationary_point(lam, theta, v_star):
    cfg = ModelConfig.one_population(theta=theta, lam=lam, j_bar=-2.0, sigma=0.5, delay=Dirac(1.0))
    st = stationary_point(cfg)
    assert st.mu[0] == 0.0 and st.v[0] == pytest.approx(v_star)
    dmu, dv = moment_rhs(cfg, st.mu, st.v)
    assert np.max(np.abs(dmu)) < 1e-12 and np.max(np.abs(dv)) < 1e-12


def test_stationary_point_declines_with_input():
    cfg = ModelConfig.one_population(theta=1.0, lam=0.5, input=0.2, j_bar=-2.0, delay=Dirac(1.0))
    with pytest.raises(ValueError):
        stationary_point(cfg)


def test_fixed_point_preserved_exactly(stationary_regime):
    traj = integrate_moments(stationary_regime, SimGrid(1e-3, 20.0))
    assert np.all(traj.mu == 0.0)
    assert np.max(np.abs(traj.v - 0.125)) < 1e-15


def test_callable_history():
    cfg = base_config(1.0)
    traj = integrate_moments(cfg, SimGrid(1e-2, 5.0), history=lambda s: (0.3 * math.cos(s), 0.125))
    t, mu, _ = traj.window(-1.0, 0.0)
    assert np.allclose(mu[:, 0], 0.3 * np.cos(t))


def test_history_variance_must_be_nonnegative():
    with pytest.raises(ValueError):
        integrate_moments(base_config(), SimGrid(1e-2, 1.0), history=(0.0, -0.1))


def test_divergence_reported():
    cfg = ModelConfig.one_population(theta=0.01, lam=0.0, j_bar=0.0, delay=Dirac(1.0))
    with pytest.raises(DivergenceError):
        integrate_moments(cfg, SimGrid(0.05, 10.0), history=(1.0, 0.0))


def test_constant_series_is_stationary():
    t = np.linspace(0, 50, 5001)
    assert classify_series(t, np.full_like(t, 0.3)).regime is Regime.STATIONARY


def test_synthetic_sine_pulsation():
    t = np.linspace(0, 100, 100001)
    c = classify_series(t, 0.2 * np.sin(1.5986 * t))
    assert c.is_oscillatory
    assert c.pulsation == pytest.approx(1.5986, rel=0.01)
    assert c.amplitude == pytest.approx(0.2, rel=1e-3)


def test_short_window_inconclusive():
    t = np.linspace(0, 5, 501)
    assert classify_series(t, np.sin(1.6 * t)).regime is Regime.INCONCLUSIVE


def test_damped_sine_is_stationary():
    t = np.linspace(0, 100, 100001)
    c = classify_series(t, np.exp(-0.05 * t) * np.sin(2 * t))
    assert c.regime is Regime.STATIONARY
    assert c.envelope_rate == pytest.approx(-0.05, rel=0.02)


def test_window_must_lie_inside_horizon(stationary_regime):
    traj = integrate_moments(stationary_regime, SimGrid(1e-2, 10.0))
    with pytest.raises(ValueError):
        classify_trajectory(traj, (5.0, 20.0))


def test_variance_nonnegative_from_zero_variance():
    cfg = ModelConfig.one_population(theta=1.0, lam=0.0, j_bar=-3.0, sigma=0.0, delay=Uniform(1.0, 0.5))
    traj = integrate_moments(cfg, SimGrid(1e-2, 30.0), history=(0.5, 0.0))
    assert traj.v.min() >= 0


def test_two_population_integration():
    pops = (PopulationParams(1.0, 0.3), PopulationParams(0.5, 0.2))
    conn = Connectivity(np.array([[0.5, -2.0], [1.5, -0.5]]), np.array([[0.1, 0.2], [0.2, 0.1]]))
    delays = ((Dirac(1.0), Uniform(1.0, 0.5)), (IntervalAveraged(0.5, 0.5), Dirac(0.3)))
    cfg = ModelConfig(pops, conn, delays)
    traj = integrate_moments(cfg, SimGrid(1e-2, 20.0), history=(0.1, 0.0))
    assert traj.mu.shape[1] == 2 and np.all(np.isfinite(traj.mu)) and traj.v.min() >= 0


def test_at_interpolates_grid_values(stationary_regime):
    traj = integrate_moments(stationary_regime, SimGrid(1e-2, 5.0), history=(0.3, 0.125))
    i = traj.history_len + 123
    mu, v = traj.at(traj.times[i])
    assert mu[0] == pytest.approx(traj.mu[i, 0], abs=1e-14)


def test_step_halving_fourth_order(stationary_regime):
    sols = []
    for dt in (0.04, 0.02, 0.01):
        traj = integrate_moments(stationary_regime, SimGrid(dt, 10.0), history=(0.3, 0.125))
        k = int(round(0.04 / dt))
        sols.append(traj.mu[traj.history_len::k, 0])
    e1 = np.max(np.abs(sols[0] - sols[1]))
    e2 = np.max(np.abs(sols[1] - sols[2]))
    assert math.log2(e1 / e2) >= 3.5


def test_meanfield_vs_network_uncoupled():
    cfg = ModelConfig.one_population(theta=1.0, lam=0.5, delay=Dirac(1.0))
    rep = meanfield_vs_network(cfg, [2000], SimGrid(1e-2, 20.0), mu0=0.3, v0=0.1, seed=1, window=(5.0, 20.0))
    # Monte-Carlo error of a mean of 2000 variables with variance ~0.125
    assert rep.l2_mu[0] < 4 * math.sqrt(0.125 / 2000)


def test_meanfield_vs_network_deterministic_limit():
    cfg = base_config(1.0, lam=0.0, sigma=0.0)
    rep = meanfield_vs_network(cfg, [500], SimGrid(1e-3, 20.0), mu0=0.3, v0=0.0, window=(0.0, 20.0))
    assert rep.l2_mu[0] < 5e-3


@pytest.mark.slow
def test_meanfield_vs_network_oscillating_regime():
    rep = meanfield_vs_network(base_config(1.5), [3000], SimGrid(2e-3, 30.0), mu0=0.3, v0=0.125, seed=2, window=(0.0, 30.0))
    assert rep.l2_mu[0] < 0.1
    assert abs(rep.skewness[0]) < 0.2 and abs(rep.excess_kurtosis[0]) < 0.2
