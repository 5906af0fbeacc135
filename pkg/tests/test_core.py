from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from delayfield.core import (
    Connectivity,
    Dirac,
    Empirical,
    IntervalAveraged,
    ModelConfig,
    PopulationParams,
    SigmoidKind,
    SigmoidSpec,
    Uniform,
    activation_slope,
    delay_laplace,
    delay_law_from_dict,
    delay_quadrature,
    delay_sample,
    gaussian_mean_activation,
    quadrature_laplace,
    sigmoid_eval,
    unit_interval_laplace,
)
from delayfield.network import delay_goodness_of_fit

CENTERED = SigmoidSpec(SigmoidKind.ERF_CENTERED, 1.0)
UNIT = SigmoidSpec(SigmoidKind.ERF_UNIT_SLOPE, 1.0)
LAWS = [Dirac(1.5), Uniform(1.5, 0.6), Uniform(2.0, 4.0), IntervalAveraged(1.0, 1.1), IntervalAveraged(2.5, 0.0)]


def _normal_area(x: float) -> float:
    val, _ = integrate.quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), 0.0, x, epsabs=1e-13)
    return val


def _hermite_oracle(s: SigmoidSpec, mu: float, v: float, n: int = 64) -> float:
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return float(np.sum(w * sigmoid_eval(s, mu + math.sqrt(v) * x)) / math.sqrt(2 * math.pi))


# -- sigmoid ----------------------------------------------------------------


@pytest.mark.parametrize("x, expected", [(0.0, 0.0), (1.0, 0.341345), (-1.0, -0.341345)])
def test_centered_sigmoid_values(x, expected):
    assert sigmoid_eval(CENTERED, x) == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("x", [0.3, 1.0, 2.7])
def test_centered_sigmoid_matches_normal_area(x):
    assert sigmoid_eval(CENTERED, x) == pytest.approx(_normal_area(x), abs=1e-12)


@given(st.floats(-30, 30), st.floats(0.1, 5.0))
def test_sigmoid_odd_and_bounded(x, g):
    s = SigmoidSpec(SigmoidKind.ERF_CENTERED, g)
    assert sigmoid_eval(s, -x) == -sigmoid_eval(s, x)
    assert abs(sigmoid_eval(s, x)) <= 0.5


def test_sigmoid_monotone():
    xs = np.linspace(-6, 6, 2001)
    assert np.all(np.diff(sigmoid_eval(CENTERED, xs)) > 0)


def test_unit_slope_sigmoid_has_gain_slope_at_origin():
    s = SigmoidSpec(SigmoidKind.ERF_UNIT_SLOPE, 1.7)
    h = 1e-6
    assert (sigmoid_eval(s, h) - sigmoid_eval(s, -h)) / (2 * h) == pytest.approx(1.7, rel=1e-8)
    assert activation_slope(s, 0.0) == pytest.approx(1.7)
    assert s.bound == pytest.approx(math.sqrt(2 * math.pi) / 2)


def test_sigmoid_rejects_nonpositive_gain():
    with pytest.raises(ValueError):
        SigmoidSpec(SigmoidKind.ERF_CENTERED, 0.0)


# -- Gaussian-mean activation -----------------------------------------------


@pytest.mark.parametrize("mu, v, expected", [(0.0, 0.7, 0.0), (1.0, 0.0, 0.341345), (1.0, 1.0, 0.260250)])
def test_gaussian_mean_activation_values(mu, v, expected):
    assert gaussian_mean_activation(CENTERED, mu, v) == pytest.approx(expected, abs=1e-6)


@settings(max_examples=60)
@given(st.floats(-3, 3), st.floats(0, 1), st.floats(0.2, 2.0))
def test_gaussian_mean_activation_matches_hermite_oracle(mu, frac, g):
    # 64 Hermite nodes resolve erf(g x) to 1e-13 while g * sqrt(v) <= 2
    s = SigmoidSpec(SigmoidKind.ERF_UNIT_SLOPE, g)
    v = (2.0 * frac / g) ** 2
    assert gaussian_mean_activation(s, mu, v) == pytest.approx(_hermite_oracle(s, mu, v), abs=1e-8)


@settings(max_examples=30)
@given(st.floats(-3, 3), st.floats(0, 9), st.floats(0.2, 5.0))
def test_gaussian_mean_activation_matches_adaptive_quadrature(mu, v, g):
    s = SigmoidSpec(SigmoidKind.ERF_CENTERED, g)
    sd = math.sqrt(v)
    val, _ = integrate.quad(
        lambda t: sigmoid_eval(s, mu + sd * t) * math.exp(-t * t / 2), -np.inf, np.inf, epsabs=1e-13
    )
    assert gaussian_mean_activation(s, mu, v) == pytest.approx(val / math.sqrt(2 * math.pi), abs=1e-8)


def test_gaussian_mean_activation_monte_carlo():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        mu, v = rng.uniform(-2, 2), rng.uniform(0, 3)
        y = sigmoid_eval(UNIT, rng.normal(mu, math.sqrt(v), 10**6))
        z = abs(y.mean() - gaussian_mean_activation(UNIT, mu, v)) / (y.std() / 1e3)
        worst = max(worst, z)
    assert worst < 4.0


def test_gaussian_mean_activation_rejects_negative_variance():
    with pytest.raises(ValueError):
        gaussian_mean_activation(CENTERED, 0.0, -1e-3)


def test_activation_slope_is_derivative_of_mean_activation():
    h = 1e-6
    for v in (0.0, 0.125, 0.5, 2.0):
        fd = (gaussian_mean_activation(UNIT, h, v) - gaussian_mean_activation(UNIT, -h, v)) / (2 * h)
        assert activation_slope(UNIT, v) == pytest.approx(fd, rel=1e-7)


# -- delay laws -------------------------------------------------------------


def test_dirac_sample_is_exact():
    rng = np.random.default_rng(0)
    assert delay_sample(Dirac(1.5), rng) == 1.5
    assert np.all(delay_sample(Dirac(1.5), rng, 100) == 1.5)


def test_uniform_sample_moments_and_support():
    d = delay_sample(Uniform(1.5, 0.6), np.random.default_rng(1), 10**5)
    assert d.mean() == pytest.approx(1.5, abs=0.01)
    assert d.min() >= 1.2 and d.max() <= 1.8


def test_interval_sample_mean():
    d = delay_sample(IntervalAveraged(1.0, 0.0), np.random.default_rng(2), 10**5)
    assert d.mean() == pytest.approx(1 / 3, abs=0.01)


@pytest.mark.parametrize("law", [Uniform(1.5, 0.6), IntervalAveraged(1.0, 1.1), IntervalAveraged(2.0, 0.0)])
def test_sample_histogram_goodness_of_fit(law):
    samples = delay_sample(law, np.random.default_rng(3), 20000)
    assert delay_goodness_of_fit(samples, law) > 0.01


def test_uniform_rejects_negative_support():
    with pytest.raises(ValueError):
        Uniform(1.0, 2.5)


def test_interval_density_integrates_to_one():
    law = IntervalAveraged(1.7, 0.4)
    val, _ = integrate.quad(law.density, 0.4, 2.1)
    assert val == pytest.approx(1.0, abs=1e-12)


def test_dirac_quadrature_single_node():
    for n in (1, 5, 32):
        assert delay_quadrature(Dirac(1.5), n) == [(1.5, 1.0)]


def test_uniform_quadrature_moments():
    q = delay_quadrature(Uniform(1.5, 0.6), 16)
    w = np.array([b for _, b in q])
    x = np.array([a for a, _ in q])
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.dot(w, x) == pytest.approx(1.5, abs=1e-10)


def test_interval_quadrature_mean():
    q = delay_quadrature(IntervalAveraged(1.0, 1.1), 32)
    assert sum(a * b for a, b in q) == pytest.approx(1.1 + 1 / 3, abs=1e-8)


@pytest.mark.parametrize("law", LAWS)
def test_quadrature_nodes_in_support(law):
    nodes, weights = law.quadrature(24)
    assert np.all(weights >= 0)
    assert nodes.min() >= law.tau_min - 1e-15 and nodes.max() <= law.tau_max + 1e-15


def test_quadrature_rejects_zero_nodes():
    with pytest.raises(ValueError):
        delay_quadrature(Uniform(1.0, 0.5), 0)


@pytest.mark.parametrize("law", LAWS + [Empirical((0.5, 1.0, 1.0, 2.0))])
def test_laplace_at_zero_is_one(law):
    assert delay_laplace(law, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_interval_laplace_value():
    assert delay_laplace(IntervalAveraged(1.0, 0.0), 1.0).real == pytest.approx(2 * math.exp(-1), abs=1e-6)


def test_uniform_laplace_dirac_limit():
    assert delay_laplace(Uniform(1.5, 1e-9), 1.0).real == pytest.approx(math.exp(-1.5), abs=1e-9)


def test_interval_laplace_small_length_limit():
    xi = 0.7 + 2.0j
    assert abs(delay_laplace(IntervalAveraged(1e-9, 1.1), xi) - cmath.exp(-xi * 1.1)) < 1e-8


def test_unit_interval_series_matches_closed_form_at_switch():
    for z in (0.2499, 0.2501, 0.25j, 0.18 + 0.17j):
        closed = (2 / z) * (1 - (1 - cmath.exp(-z)) / z)
        assert abs(unit_interval_laplace(z) - closed) < 1e-13


@pytest.mark.parametrize("law", LAWS)
def test_laplace_matches_quadrature_on_grid(law):
    grid = [0.1 * k * (1 + 1j) for k in range(101)]
    err = max(abs(delay_laplace(law, x) - quadrature_laplace(law, x)) for x in grid)
    assert err < 1e-8


@given(st.floats(0, 10), st.floats(-10, 10))
def test_laplace_bounded_on_right_half_plane(re, im):
    for law in LAWS:
        assert abs(delay_laplace(law, complex(re, im))) <= 1 + 1e-12


def test_empirical_law():
    law = Empirical((0.5, 1.0, 1.5))
    assert law.tau_max == 1.5 and law.mean == pytest.approx(1.0)
    assert delay_laplace(law, 1j) == pytest.approx(np.mean(np.exp(-1j * np.array([0.5, 1.0, 1.5]))))


@pytest.mark.parametrize("law", LAWS + [Empirical((0.5, 1.0))])
def test_law_dict_round_trip(law):
    assert delay_law_from_dict(law.to_dict()) == law


# -- configuration ----------------------------------------------------------


def test_model_config_dimension_checks():
    pops = (PopulationParams(1.0), PopulationParams(1.0))
    with pytest.raises(ValueError):
        ModelConfig(pops, Connectivity.scalar(-1.0), ((Dirac(1.0),),))
    with pytest.raises(ValueError):
        ModelConfig(pops[:1], Connectivity.scalar(-1.0), ((Dirac(1.0), Dirac(1.0)),))


def test_connectivity_rejects_negative_sigma():
    with pytest.raises(ValueError):
        Connectivity.scalar(-2.0, -0.1)


def test_population_rejects_bad_parameters():
    with pytest.raises(ValueError):
        PopulationParams(0.0)
    with pytest.raises(ValueError):
        PopulationParams(1.0, lam=-0.5)


def test_model_config_properties():
    cfg = ModelConfig.one_population(theta=2.0, lam=0.5, j_bar=-2.0, delay=Uniform(1.5, 0.6))
    assert cfg.tau_max == pytest.approx(1.8)
    assert cfg.tau_min == pytest.approx(1.2)
    assert cfg.sigmoid.kind is SigmoidKind.ERF_UNIT_SLOPE
    assert cfg.replace_delays(Dirac(1.0)).tau_max == 1.0
    assert cfg.theta.tolist() == [2.0]
