from __future__ import annotations

import math

import numpy as np
import pytest

from delayfield.bifurcation import DispersionContext, rightmost_root
from delayfield.convergence import chaos_decorrelation, coupling_experiment, fit_loglog
from delayfield.core import Connectivity, Dirac, IntervalAveraged, ModelConfig, PopulationParams
from delayfield.network import FrozenHistory, IntervalPositions
from tests.conftest import base_config

SMALL = dict(trials=4, T=2.0, dt=5e-3)


def test_fit_loglog_recovers_power_law():
    n = np.array([10, 20, 40, 80, 160])
    slope, intercept, ci = fit_loglog(n, 3.0 / n)
    assert slope == pytest.approx(-1.0, abs=1e-12)
    assert math.exp(intercept) == pytest.approx(3.0)
    assert ci[0] <= slope <= ci[1]


def test_fit_loglog_two_points_has_no_interval():
    _, _, ci = fit_loglog([10, 20], [1.0, 0.5])
    assert all(math.isnan(c) for c in ci)


def test_exact_coupling_without_interaction():
    cfg = ModelConfig.one_population(theta=1.0, lam=0.5, j_bar=0.0, sigma=0.0, delay=Dirac(1.0))
    rep = coupling_experiment(cfg, [20, 40], **SMALL)
    assert rep.exact_coupling
    assert np.all(rep.errors == 0) and np.all(rep.failures == 0)


def test_error_decreases_with_size():
    rep = coupling_experiment(base_config(1.0), [50, 200, 800], seed=1, **SMALL)
    assert rep.errors[0] > rep.errors[-1]
    # nonincreasing up to two standard errors
    assert np.all(np.diff(rep.errors) <= 2 * (rep.stderr[:-1] + rep.stderr[1:]))
    assert -1.6 < rep.slope < -0.5
    assert rep.constant > 0
    assert [r[0] for r in rep.rows()] == [50, 200, 800]


def test_report_deterministic_and_independent_of_workers():
    cfg = base_config(1.0)
    a = coupling_experiment(cfg, [30, 60], seed=3, **SMALL)
    b = coupling_experiment(cfg, [60, 30], seed=3, **SMALL)
    c = coupling_experiment(cfg, [30, 60], seed=3, workers=4, **SMALL)
    assert a.errors.tobytes() == b.errors.tobytes() == c.errors.tobytes()
    d = coupling_experiment(cfg, [30, 60], seed=4, **SMALL)
    assert a.errors.tobytes() != d.errors.tobytes()


def test_two_populations_governed_by_smallest():
    pops = (PopulationParams(1.0, 0.5), PopulationParams(1.0, 0.5))
    conn = Connectivity(np.array([[-1.0, -1.0], [-1.0, -1.0]]), np.full((2, 2), 0.3))
    cfg = ModelConfig(pops, conn, ((Dirac(1.0), Dirac(0.8)), (Dirac(0.8), Dirac(1.0))))
    rep = coupling_experiment(cfg, [50, 200, 800], pop_ratios=(1, 4), seed=2, **SMALL)
    assert -1.6 < rep.slope < -0.5


def test_validation_errors():
    with pytest.raises(ValueError):
        coupling_experiment(base_config(), [100], **SMALL)
    with pytest.raises(ValueError):
        coupling_experiment(base_config(), [10, 20], trials=3)


@pytest.mark.slow
def test_positional_topology_averaged_rate():
    cfg = base_config().replace_delays(IntervalAveraged(1.0, 0.5))
    rep = coupling_experiment(
        cfg, [100, 200, 400, 800], trials=8, T=3.0, dt=5e-3, seed=5, topology=IntervalPositions(1.0, 0.5)
    )
    assert -1.3 <= rep.slope <= -0.7


def test_decorrelation_independent_neurons():
    cfg = ModelConfig.one_population(theta=0.05, lam=1.0, delay=Dirac(0.05))
    rep = chaos_decorrelation(cfg, [20, 80], trials=2, T=40.0, dt=1e-3, init=FrozenHistory(0.0), n_pairs=16)
    assert np.all(rep.mean_abs_corr < 0.05)
    assert not rep.degenerate


def test_decorrelation_deterministic_network_is_degenerate():
    cfg = base_config(1.0, lam=0.0, sigma=0.0)
    rep = chaos_decorrelation(cfg, [10, 20], trials=2, T=10.0, dt=1e-2, init=FrozenHistory(0.3), n_pairs=8)
    assert rep.degenerate and math.isnan(rep.p_value)


@pytest.mark.slow
def test_decorrelation_decreases_with_size():
    # close to onset, where weakly damped finite-size fluctuations are shared by every neuron
    cfg = base_config(1.32)
    assert rightmost_root(DispersionContext.from_config(cfg)).real < 0
    rep = chaos_decorrelation(cfg, [200, 3200], trials=4, seed=0)
    assert rep.mean_abs_corr[1] < rep.mean_abs_corr[0]
    assert rep.p_value < 0.05
