"""Gaussian moment equations of the mean-field limit.

For the firing-rate model the limit law is Gaussian with mean ``mu_a`` and
variance ``v_a`` obeying

    mu_a' = -mu_a/theta_a + I_a + sum_g J_ag int f(mu_g(t-u), v_g(t-u)) deta_ag(u)
    v_a'  = -2 v_a/theta_a + lambda_a^2 + sum_g sigma_ag^2 (int f(mu_g(t-u), v_g(t-u)) deta_ag(u))^2

with ``f(mu, v) = E[S(X)]``, ``X ~ N(mu, v)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import signal

from . import _kernels
from .core import (
    DEFAULT_QUADRATURE_NODES,
    DelayLaw,
    ModelConfig,
    gaussian_mean_activation,
)
from .errors import DivergenceError
from .grid import SimGrid

STATIONARY_RANGE = 1e-4
# Envelope decay faster than this (per unit time) over the tail of the
# window is read as convergence to the fixed point.
DECAY_RATE_TOL = 1e-4


@dataclass(frozen=True)
class MomentState:
    mu: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))


History = Callable[[float], tuple]


def constant_history(mu0, v0) -> History:
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))

    def history(s):
        return mu0, v0

    history.constant = (mu0, v0)
    return history


@dataclass
class MomentTrajectory:
    """Moments on the uniform grid ``t_j = (j - history_len) * dt``.

    Stored derivatives allow cubic Hermite evaluation anywhere in
    ``[-history_len * dt, t_end]``; at ``t = 0`` left and right derivatives
    differ (history slope versus vector field).
    """

    config: ModelConfig
    dt: float
    history_len: int
    mu: np.ndarray
    v: np.ndarray
    dmu_left: np.ndarray
    dmu_right: np.ndarray
    dv_left: np.ndarray
    dv_right: np.ndarray
    n_nodes: int = DEFAULT_QUADRATURE_NODES

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.mu.shape[0]) - self.history_len) * self.dt

    @property
    def t_end(self) -> float:
        return (self.mu.shape[0] - 1 - self.history_len) * self.dt

    @property
    def t_start(self) -> float:
        return -self.history_len * self.dt

    def state(self, index: int) -> MomentState:
        return MomentState(self.mu[index], self.v[index])

    def at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Hermite-interpolated ``(mu, v)``; arrays of shape ``t.shape + (P,)``."""
        t = np.asarray(t, dtype=float)
        x = t / self.dt + self.history_len
        last = self.mu.shape[0] - 1
        if np.any(x < -1e-9) or np.any(x > last + 1e-9):
            raise ValueError(
                f"requested times outside trajectory span [{self.t_start}, {self.t_end}]"
            )
        x = np.clip(x, 0.0, last)
        j = np.minimum(np.floor(x).astype(int), last - 1)
        s = (x - j)[..., None]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s**2 * (3 - 2 * s)
        h11 = s**2 * (s - 1)
        mu = h00 * self.mu[j] + h10 * self.dt * self.dmu_right[j] + h01 * self.mu[j + 1] + h11 * self.dt * self.dmu_left[j + 1]
        v = h00 * self.v[j] + h10 * self.dt * self.dv_right[j] + h01 * self.v[j + 1] + h11 * self.dt * self.dv_left[j + 1]
        return mu, v

    def delayed_activation(self, times, n_nodes: int | None = None) -> np.ndarray:
        """``int f(mu_g(t-u), v_g(t-u)) deta_ag(u)`` with shape ``(len(times), P, P)``."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        n_nodes = n_nodes or self.n_nodes
        cfg = self.config
        p = cfg.n_populations
        out = np.zeros((times.size, p, p))
        for a in range(p):
            for g in range(p):
                nodes, weights = cfg.delays[a][g].quadrature(n_nodes)
                mu, v = self.at(times[:, None] - nodes[None, :])
                f = gaussian_mean_activation(cfg.sigmoid, mu[..., g], np.maximum(v[..., g], 0.0))
                out[:, a, g] = f @ weights
        return out

    def window(self, t1: float, t2: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = self.times
        sel = (t >= t1 - 1e-12) & (t <= t2 + 1e-12)
        return t[sel], self.mu[sel], self.v[sel]


def _flatten_quadrature(config: ModelConfig, n_nodes: int):
    p = config.n_populations
    nodes, weights, starts = [], [], [0]
    for a in range(p):
        for g in range(p):
            x, w = config.delays[a][g].quadrature(n_nodes)
            nodes.append(x)
            weights.append(w)
            starts.append(starts[-1] + x.size)
    return np.concatenate(nodes), np.concatenate(weights), np.asarray(starts, dtype=np.int64)


def _history_derivative(history: History, s: float, h: float = 1e-6):
    mp, vp = history(min(s + h, 0.0))
    mm, vm = history(s - h)
    span = min(s + h, 0.0) - (s - h)
    return (np.asarray(mp) - np.asarray(mm)) / span, (np.asarray(vp) - np.asarray(vm)) / span


def integrate_moments(
    config: ModelConfig,
    grid: SimGrid,
    history=None,
    n_nodes: int = DEFAULT_QUADRATURE_NODES,
) -> MomentTrajectory:
    """Integrate the moment delay equations with classical RK4.

    ``history`` is a callable ``s -> (mu, v)`` on ``[-tau_max, 0]``, a pair
    ``(mu0, v0)`` of constants, or ``None`` for the stationary point.
    Delayed values are read by cubic Hermite interpolation of the stored
    trajectory; delay integrals use ``n_nodes`` quadrature nodes per law.
    """
    p = config.n_populations
    if history is None:
        st = stationary_point(config)
        history = constant_history(st.mu, st.v)
    elif not callable(history):
        history = constant_history(*history)

    dt = grid.dt
    h0 = grid.history_steps(config.tau_max)
    n_steps = grid.n_steps
    rows = h0 + n_steps + 1
    mu = np.zeros((rows, p))
    v = np.zeros((rows, p))
    dmu_l = np.zeros((rows, p))
    dmu_r = np.zeros((rows, p))
    dv_l = np.zeros((rows, p))
    dv_r = np.zeros((rows, p))
    const = getattr(history, "constant", None)
    for j in range(h0 + 1):
        if const is not None:
            mu[: h0 + 1] = np.broadcast_to(const[0], (p,))
            v[: h0 + 1] = np.broadcast_to(const[1], (p,))
            if np.any(v[0] < 0):
                raise ValueError("history variance must be >= 0")
            break
        s = (j - h0) * dt
        m, var = history(s)
        m = np.broadcast_to(np.asarray(m, dtype=float), (p,))
        var = np.broadcast_to(np.asarray(var, dtype=float), (p,))
        if np.any(var < 0):
            raise ValueError("history variance must be >= 0")
        mu[j], v[j] = m, var
        dm, dvv = _history_derivative(history, s)
        dmu_l[j] = dmu_r[j] = np.broadcast_to(dm, (p,))
        dv_l[j] = dv_r[j] = np.broadcast_to(dvv, (p,))

    qn, qw, qs = _flatten_quadrature(config, n_nodes)
    c = config.connectivity
    status = _kernels.integrate_moments_rk4(
        mu, v, dmu_l, dmu_r, dv_l, dv_r, h0, n_steps, dt,
        config.theta, config.lam, config.inputs, c.j_bar, c.sigma**2,
        qn, qw, qs, config.sigmoid.amplitude, config.sigmoid.gain,
    )
    if status >= 0:
        raise DivergenceError(
            f"moment integration diverged at step {status} (t={status * dt:.6g})",
            step=int(status), time=status * dt,
        )
    return MomentTrajectory(config, dt, h0, mu, v, dmu_l, dmu_r, dv_l, dv_r, n_nodes)


def moment_rhs(config: ModelConfig, mu, v) -> tuple[np.ndarray, np.ndarray]:
    """Vector field of the moment equations at a constant (delay-free) state."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    f = gaussian_mean_activation(config.sigmoid, mu, v)
    c = config.connectivity
    dmu = -mu / config.theta + config.inputs + c.j_bar @ f
    dv = -2 * v / config.theta + config.lam**2 + (c.sigma**2) @ (f**2)
    return dmu, dv


def stationary_point(config: ModelConfig) -> MomentState:
    """The fixed point ``(0, lambda^2 theta / 2)`` of the centered, input-free model."""
    if np.any(config.inputs != 0):
        raise ValueError("closed-form stationary point requires zero external input")
    if abs(gaussian_mean_activation(config.sigmoid, 0.0, 0.0)) != 0.0:
        raise ValueError("closed-form stationary point requires a centered sigmoid")
    return MomentState(np.zeros(config.n_populations), config.lam**2 * config.theta / 2)


def default_transient(config: ModelConfig) -> float:
    return max(10 * float(np.max(config.theta)), 5 * config.tau_max)


# ---------------------------------------------------------------------------
# Classification


class Regime(str, enum.Enum):
    STATIONARY = "Stationary"
    OSCILLATORY = "Oscillatory"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Classification:
    regime: Regime
    pulsation: float = math.nan
    amplitude: float = 0.0
    peak_to_peak: float = 0.0
    envelope_rate: float = math.nan
    detail: str = ""

    @property
    def is_oscillatory(self) -> bool:
        return self.regime is Regime.OSCILLATORY

    def __str__(self):
        if self.regime is Regime.OSCILLATORY:
            return f"Oscillatory(pulsation={self.pulsation:.6g}, amplitude={self.amplitude:.6g})"
        return self.regime.value if not self.detail else f"{self.regime.value}({self.detail})"


def _local_extrema(y: np.ndarray):
    d = np.diff(y)
    maxima = np.flatnonzero((d[:-1] > 0) & (d[1:] <= 0)) + 1
    minima = np.flatnonzero((d[:-1] < 0) & (d[1:] >= 0)) + 1
    return maxima, minima


def _refine_peak(t: np.ndarray, y: np.ndarray, i: int) -> float:
    # parabola through three samples
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    den = y0 - 2 * y1 + y2
    off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    return t[i] + off * (t[i + 1] - t[i])


def classify_series(
    t: np.ndarray, y: np.ndarray, *, min_periods: int = 3, prominence: float | None = None
) -> Classification:
    """Stationary/Oscillatory decision for one sampled series.

    Stationary when the peak-to-peak range is below ``1e-4`` or the
    oscillation envelope over the last third of the window decays
    exponentially (log-amplitude slope below ``-1e-4``). Otherwise the
    pulsation comes from the mean spacing of refined maxima.

    For noisy series (network statistics) pass ``prominence``: only extrema
    standing out by that fraction of the peak-to-peak range count.
    """
    ptp = float(np.ptp(y))
    if ptp < STATIONARY_RANGE:
        return Classification(Regime.STATIONARY, peak_to_peak=ptp)
    if prominence is None:
        maxima, minima = _local_extrema(y)
    else:
        maxima = signal.find_peaks(y, prominence=prominence * ptp)[0]
        minima = signal.find_peaks(-y, prominence=prominence * ptp)[0]
        maxima = maxima[(maxima > 0) & (maxima < y.size - 1)]
    if maxima.size < min_periods + 1 or minima.size < min_periods:
        return Classification(Regime.INCONCLUSIVE, peak_to_peak=ptp, detail="fewer than 3 periods in window")
    peak_times = np.array([_refine_peak(t, y, i) for i in maxima])
    period = float(np.mean(np.diff(peak_times)))
    # amplitude of each cycle: half the drop from a maximum to the next minimum
    amps, amp_times = [], []
    for i in maxima:
        nxt = minima[minima > i]
        if nxt.size:
            amps.append(0.5 * (y[i] - y[nxt[0]]))
            amp_times.append(t[i])
    amps = np.asarray(amps)
    amp_times = np.asarray(amp_times)
    tail = amp_times >= amp_times[0] + (amp_times[-1] - amp_times[0]) * 2 / 3
    if tail.sum() < 3:
        tail = np.zeros_like(tail)
        tail[-3:] = True
    rate = math.nan
    if np.all(amps[tail] > 0):
        rate = float(np.polyfit(amp_times[tail], np.log(amps[tail]), 1)[0])
    last_cycles = y[maxima[-min(len(maxima), 4)]:]
    amplitude = 0.5 * float(np.ptp(last_cycles))
    if math.isfinite(rate) and rate < -DECAY_RATE_TOL:
        return Classification(
            Regime.STATIONARY, peak_to_peak=ptp, envelope_rate=rate, pulsation=2 * math.pi / period,
            amplitude=amplitude, detail="decaying oscillation",
        )
    return Classification(
        Regime.OSCILLATORY, pulsation=2 * math.pi / period, amplitude=amplitude,
        peak_to_peak=ptp, envelope_rate=rate,
    )


def classify_trajectory(
    traj: MomentTrajectory,
    window: tuple[float, float] | None = None,
    population: int = 0,
) -> Classification:
    """Classify the mean of one population over ``window``.

    The default window runs from ``max(10 theta, 5 tau_max)`` to the end of
    the horizon.
    """
    if window is None:
        window = (default_transient(traj.config), traj.t_end)
    t1, t2 = window
    if not (traj.t_start <= t1 < t2 <= traj.t_end + 1e-9):
        raise ValueError(f"window {window} is not inside [{traj.t_start}, {traj.t_end}]")
    t, mu, _ = traj.window(t1, t2)
    return classify_series(t, mu[:, population])


# ---------------------------------------------------------------------------
# Cross-validation against the network simulator


def l2_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Root-mean-square difference of two sampled series."""
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


@dataclass
class MeanFieldComparison:
    window: tuple[float, float]
    l2_mu: np.ndarray
    l2_v: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    times: np.ndarray = field(repr=False)
    mf_mu: np.ndarray = field(repr=False)
    mf_v: np.ndarray = field(repr=False)
    emp_mean: np.ndarray = field(repr=False)
    emp_var: np.ndarray = field(repr=False)


def meanfield_vs_network(
    config: ModelConfig,
    pop_sizes,
    grid: SimGrid,
    *,
    mu0: float = 0.0,
    v0: float | None = None,
    topology=None,
    seed: int = 0,
    window: tuple[float, float] | None = None,
    n_nodes: int = DEFAULT_QUADRATURE_NODES,
) -> MeanFieldComparison:
    """Run both simulators from matched Gaussian initial laws and compare.

    The network starts from i.i.d. constant histories ``N(mu0, v0)``; the
    moment equations start from the constant history ``(mu0, v0)``. Distances
    are root-mean-square over ``window``; skewness and excess kurtosis are
    cross-sectional and averaged over the window.
    """
    from .network import ChaoticGaussian, SampledDelays, build_realization, empirical_moments, simulate_network

    if v0 is None:
        v0 = float(stationary_point(config).v[0]) if np.all(config.inputs == 0) else 0.0
    traj_mf = integrate_moments(config, grid, history=(mu0, v0), n_nodes=n_nodes)
    real = build_realization(config, pop_sizes, topology or SampledDelays(), seed=seed)
    traj_net = simulate_network(config, real, grid, ChaoticGaussian(mu0, v0), seed=seed, record=())
    if window is None:
        window = (default_transient(config), grid.t_end)
    t = traj_net.times
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    mf_mu, mf_v = traj_mf.at(t[sel])
    emp_mean, emp_var = empirical_moments(traj_net)
    emp_mean, emp_var = emp_mean[sel], emp_var[sel]
    p = config.n_populations
    return MeanFieldComparison(
        window=window,
        l2_mu=np.array([l2_distance(mf_mu[:, a], emp_mean[:, a]) for a in range(p)]),
        l2_v=np.array([l2_distance(mf_v[:, a], emp_var[:, a]) for a in range(p)]),
        skewness=np.nanmean(traj_net.skewness[sel], axis=0),
        excess_kurtosis=np.nanmean(traj_net.excess_kurtosis[sel], axis=0),
        times=t[sel], mf_mu=mf_mu, mf_v=mf_v, emp_mean=emp_mean, emp_var=emp_var,
    )

