"""Finite-size network simulation with quenched random delays.

Neuron ``i`` of population ``a`` follows the Euler-Maruyama scheme

    X_{t+dt} = X_t + dt (-X_t/theta_a + I_a + sum_g J_ag/N_g sum_{p(j)=g} S(X^j_{t - tau_ij}))
               + lambda_a sqrt(dt) xi^i + sum_g sigma_ag/N_g (sum_{p(j)=g} S(X^j_{t - tau_ij})) sqrt(dt) zeta^{ig}

Delayed states are read at the nearest grid point. The intrinsic noise
``xi^i`` and the weight noise ``zeta^{ig}`` of neuron ``i`` come from a
counter-based (Philox) stream keyed on ``(seed, i)``, so a given neuron sees
the same increments whatever the network size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .core import IntervalAveraged, ModelConfig
from .errors import DivergenceError
from .grid import SimGrid
from .meanfield import MomentTrajectory

# Stream tags mixed into the per-neuron seed sequences.
_NOISE_STREAM = 1
_INIT_STREAM = 2
_MAX_CHUNK_VALUES = 4_000_000


# ---------------------------------------------------------------------------
# Topologies and initial conditions


@dataclass(frozen=True)
class SampledDelays:
    """Row-wise i.i.d. delays drawn from the configured laws."""


@dataclass(frozen=True)
class IntervalPositions:
    """Neurons placed uniformly on ``[0, a]``; ``tau_ij = |r_i - r_j| + tau_s``."""

    a: float
    tau_s: float = 0.0


@dataclass(frozen=True)
class ChaoticGaussian:
    """I.i.d. constant histories ``X^i_s = Z^i``, ``Z^i ~ N(mu0, v0)``."""

    mu0: float = 0.0
    v0: float = 0.0


@dataclass(frozen=True)
class FrozenHistory:
    """Every neuron holds ``value`` on ``[-tau_max, 0]``."""

    value: float = 0.0


# ---------------------------------------------------------------------------
# Realizations


@dataclass
class NetworkRealization:
    """A quenched draw of neuron populations and pairwise delays.

    ``block_delays[a][g]`` is either a float (every delay from population
    ``g`` into population ``a`` equal) or an ``(N_a, N_g)`` array; row ``i``
    holds the delays into neuron ``i``.
    """

    pop_sizes: tuple
    block_delays: list
    master_seed: int
    positions: np.ndarray | None = None

    @property
    def n_neurons(self) -> int:
        return int(sum(self.pop_sizes))

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.pop_sizes)[:-1]]).astype(np.int64)

    @property
    def assignment(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.pop_sizes)), self.pop_sizes)

    @property
    def delays(self) -> np.ndarray:
        """Full ``N x N`` delay matrix (materialized on demand)."""
        rows = []
        for a, na in enumerate(self.pop_sizes):
            blocks = []
            for g, ng in enumerate(self.pop_sizes):
                b = self.block_delays[a][g]
                blocks.append(np.full((na, ng), b) if np.isscalar(b) else b)
            rows.append(np.hstack(blocks))
        return np.vstack(rows)

    @property
    def tau_max(self) -> float:
        return max(float(np.max(b)) for row in self.block_delays for b in row)

    @property
    def tau_min(self) -> float:
        return min(float(np.min(b)) for row in self.block_delays for b in row)


def build_realization(
    config: ModelConfig,
    pop_sizes: Sequence[int],
    topology=None,
    seed: int = 0,
) -> NetworkRealization:
    """Draw the quenched delays of a network with the given population sizes."""
    topology = topology or SampledDelays()
    sizes = tuple(int(n) for n in np.atleast_1d(pop_sizes))
    p = config.n_populations
    if len(sizes) != p:
        raise ValueError(f"got {len(sizes)} population sizes for {p} populations")
    if any(n < 1 for n in sizes):
        raise ValueError(f"population sizes must be >= 1, got {sizes}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))

    if isinstance(topology, IntervalPositions):
        expected = IntervalAveraged(topology.a, topology.tau_s)
        for row in config.delays:
            for law in row:
                if law != expected:
                    raise ValueError(
                        f"interval topology {topology} needs every delay law equal to {expected}, got {law}"
                    )
        r = rng.uniform(0.0, topology.a, sum(sizes))
        off = np.concatenate([[0], np.cumsum(sizes)])
        blocks = []
        for a in range(p):
            row = []
            for g in range(p):
                d = np.subtract.outer(r[off[a]:off[a + 1]], r[off[g]:off[g + 1]])
                np.abs(d, out=d)
                d += topology.tau_s
                row.append(d)
            blocks.append(row)
        return NetworkRealization(sizes, blocks, seed, positions=r)

    if not isinstance(topology, SampledDelays):
        raise TypeError(f"unknown topology {topology!r}")
    blocks = []
    for a in range(p):
        row = []
        for g in range(p):
            law = config.delays[a][g]
            if law.is_point_mass:
                row.append(float(law.tau_min))
            else:
                row.append(np.asarray(law.sample(rng, (sizes[a], sizes[g])), dtype=float))
        blocks.append(row)
    return NetworkRealization(sizes, blocks, seed)


# ---------------------------------------------------------------------------
# Trajectories


@dataclass
class TrajectorySet:
    """Output of a network (or mean-field particle) simulation.

    ``states`` holds recorded neurons (columns follow ``recorded``) every
    ``stride`` steps from ``t = 0``. Cross-sectional population statistics
    are kept for every step.
    """

    dt: float
    stride: int
    recorded: np.ndarray
    states: np.ndarray
    pop_stats: np.ndarray = field(repr=False)
    initial: np.ndarray = field(repr=False)
    final: np.ndarray = field(repr=False)
    assignment: np.ndarray = field(repr=False)
    history_len: int = 0

    @property
    def times(self) -> np.ndarray:
        """Times of the per-step population statistics."""
        return np.arange(self.pop_stats.shape[0]) * self.dt

    @property
    def record_times(self) -> np.ndarray:
        return np.arange(self.states.shape[0]) * self.dt * self.stride

    @property
    def pop_mean(self) -> np.ndarray:
        return self.pop_stats[:, :, 0]

    @property
    def pop_var(self) -> np.ndarray:
        return self.pop_stats[:, :, 1]

    @property
    def skewness(self) -> np.ndarray:
        return self.pop_stats[:, :, 2]

    @property
    def excess_kurtosis(self) -> np.ndarray:
        return self.pop_stats[:, :, 3]

    def series(self, neuron: int) -> np.ndarray:
        hit = np.flatnonzero(self.recorded == neuron)
        if hit.size == 0:
            raise KeyError(f"neuron {neuron} was not recorded")
        return self.states[:, hit[0]]


def _neuron_rng(seed: int, neuron: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, neuron))))


def _initial_values(init, n: int, seed: int) -> np.ndarray:
    if isinstance(init, FrozenHistory):
        return np.full(n, float(init.value))
    if isinstance(init, ChaoticGaussian):
        if init.v0 < 0:
            raise ValueError("initial variance must be >= 0")
        z = np.array([_neuron_rng(seed, i, _INIT_STREAM).standard_normal() for i in range(n)])
        return init.mu0 + math.sqrt(init.v0) * z
    raise TypeError(f"unknown initial condition {init!r}")


def _lag_structure(realization: NetworkRealization, dt: float):
    p = len(realization.pop_sizes)
    block_const = np.zeros((p, p), dtype=np.bool_)
    block_lag = np.zeros((p, p), dtype=np.int64)
    for a in range(p):
        for g in range(p):
            b = realization.block_delays[a][g]
            if np.isscalar(b):
                block_const[a, g] = True
                block_lag[a, g] = int(round(b / dt))
    if block_const.all():
        lag_mat = np.zeros((1, 1), dtype=np.int32)
    else:
        lag_mat = np.rint(realization.delays / dt).astype(np.int32)
    return block_const, block_lag, lag_mat


def _run(
    config: ModelConfig,
    realization: NetworkRealization,
    grid: SimGrid,
    init,
    seed: int,
    record,
    stride: int,
    mf: np.ndarray | None,
):
    if len(realization.pop_sizes) != config.n_populations:
        raise ValueError("realization and config disagree on the number of populations")
    grid.check_delays(realization.tau_min, realization.tau_max)
    dt = grid.dt
    n = realization.n_neurons
    p = config.n_populations
    n_steps = grid.n_steps
    hist = grid.history_steps(realization.tau_max)
    ring = hist + 1
    sizes = np.asarray(realization.pop_sizes, dtype=np.int64)
    offsets = realization.offsets
    pop_of = realization.assignment.astype(np.int64)

    if record is None:
        rec_idx = np.arange(n, dtype=np.int64)
    else:
        rec_idx = np.asarray(list(record), dtype=np.int64).reshape(-1)
        if rec_idx.size and (rec_idx.min() < 0 or rec_idx.max() >= n):
            raise ValueError("recorded neuron index out of range")
    stride = max(1, int(stride))
    n_rec = n_steps // stride + 1

    x0 = _initial_values(init, n, seed)
    x = x0.copy()
    coupled = mf is not None
    xbar = x0.copy() if coupled else np.zeros(1)
    s = config.sigmoid
    s0 = s.amplitude * 0.5 * np.asarray([math.erf(s.gain * xi / math.sqrt(2.0)) for xi in x0])
    sbuf = np.tile(s0, (ring, 1))
    popbuf = np.tile(np.bincount(pop_of, weights=s0, minlength=p), (ring, 1))

    block_const, block_lag, lag_mat = _lag_structure(realization, dt)
    c = config.connectivity
    rec_x = np.zeros((n_rec, rec_idx.size))
    rec_xbar = np.zeros((n_rec, rec_idx.size)) if coupled else np.zeros((1, 1))
    mom_x = np.zeros((n_steps + 1, p, 4))
    mom_xbar = np.zeros((n_steps + 1, p, 4)) if coupled else np.zeros((1, p, 4))
    sup_err = np.zeros(n)
    rec_x[0] = x0[rec_idx]
    if coupled:
        rec_xbar[0] = x0[rec_idx]
    _kernels.initial_moments(x, offsets, sizes, mom_x[0])
    if coupled:
        _kernels.initial_moments(xbar, offsets, sizes, mom_xbar[0])
    mf_arr = mf if coupled else np.zeros((1, p, p))

    rngs = [_neuron_rng(seed, i, _NOISE_STREAM) for i in range(n)]
    chunk = max(1, min(n_steps, _MAX_CHUNK_VALUES // max(1, n * (1 + p))))
    noise = np.empty((chunk, n, 1 + p))
    n_done = 0
    while n_done < n_steps:
        k = min(chunk, n_steps - n_done)
        for i, rng in enumerate(rngs):
            noise[:k, i, :] = rng.standard_normal((k, 1 + p))
        status = _kernels.network_chunk(
            x, xbar, sbuf, popbuf, n_done, k, hist, dt,
            pop_of, offsets, sizes, config.theta, config.lam, config.inputs, c.j_bar, c.sigma,
            s.amplitude, s.gain, block_const, block_lag, lag_mat, noise, mf_arr, coupled,
            rec_idx, stride, rec_x, rec_xbar, mom_x, mom_xbar, sup_err,
        )
        if status >= 0:
            raise DivergenceError(
                f"network state exceeded 1e6 at step {status} (t={status * dt:.6g})",
                step=int(status), time=status * dt,
            )
        n_done += k

    assignment = realization.assignment
    net = TrajectorySet(dt, stride, rec_idx, rec_x, mom_x, x0, x.copy(), assignment, hist)
    if not coupled:
        return net, None, None
    bar = TrajectorySet(dt, stride, rec_idx, rec_xbar, mom_xbar, x0, xbar.copy(), assignment, hist)
    return net, bar, sup_err


def simulate_network(
    config: ModelConfig,
    realization: NetworkRealization,
    grid: SimGrid,
    init=None,
    seed: int | None = None,
    *,
    record=None,
    stride: int = 1,
) -> TrajectorySet:
    """Simulate the network SDE on ``grid``.

    ``record`` selects which neurons keep full time series (default: all);
    population statistics are always kept at every step. ``seed`` defaults
    to the realization's master seed.
    """
    seed = realization.master_seed if seed is None else seed
    net, _, _ = _run(config, realization, grid, init or ChaoticGaussian(), seed, record, stride, None)
    return net


@dataclass
class CoupledRun:
    network: TrajectorySet
    meanfield: TrajectorySet
    sup_sq_error: np.ndarray

    def __iter__(self):
        return iter((self.network, self.meanfield))


def meanfield_drive(traj: MomentTrajectory, grid: SimGrid) -> np.ndarray:
    """Delay-averaged activations ``m_ag(t_n)`` on the network grid."""
    times = np.arange(grid.n_steps) * grid.dt
    if traj.t_end < times[-1] - 1e-9:
        raise ValueError(f"mean-field trajectory ends at {traj.t_end}, grid needs {times[-1]}")
    return traj.delayed_activation(times)


def simulate_coupled_pair(
    config: ModelConfig,
    realization: NetworkRealization,
    grid: SimGrid,
    meanfield_traj: MomentTrajectory,
    init=None,
    seed: int | None = None,
    *,
    record=None,
    stride: int = 1,
) -> CoupledRun:
    """Network and independent mean-field particles driven by the same noise.

    Particle ``i`` replaces the empirical sums by the mean-field law of
    ``meanfield_traj`` integrated against the delay laws, and shares neuron
    ``i``'s initial history and Brownian increments. ``sup_sq_error[i]`` is
    ``sup_t |X^i_t - Xbar^i_t|^2`` on the grid.
    """
    seed = realization.master_seed if seed is None else seed
    mf = meanfield_drive(meanfield_traj, grid)
    net, bar, sup_err = _run(config, realization, grid, init or ChaoticGaussian(), seed, record, stride, mf)
    return CoupledRun(net, bar, sup_err)


def empirical_moments(traj: TrajectorySet) -> tuple[np.ndarray, np.ndarray]:
    """Cross-sectional mean and unbiased variance, each of shape ``(steps, P)``."""
    return traj.pop_mean, traj.pop_var


def snapshot_moments(x: np.ndarray, assignment: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and unbiased variance per population of a single state vector."""
    x = np.asarray(x, dtype=float)
    pops = np.unique(assignment)
    means, variances = [], []
    for g in pops:
        xs = x[assignment == g]
        if xs.size < 2:
            raise ValueError(f"variance undefined for population {g} with {xs.size} neuron")
        means.append(xs.mean())
        variances.append(xs.var(ddof=1))
    return np.array(means), np.array(variances)


def pairwise_correlation(traj: TrajectorySet, pairs) -> np.ndarray:
    """Pearson correlation of each pair over the second half of the horizon.

    Pairs involving a zero-variance series give ``nan``.
    """
    half = traj.states.shape[0] // 2
    out = []
    for i, j in pairs:
        a = traj.series(i)[half:]
        b = traj.series(j)[half:]
        if np.ptp(a) == 0 or np.ptp(b) == 0:
            out.append(math.nan)
            continue
        out.append(float(np.corrcoef(a, b)[0, 1]))
    return np.asarray(out)


def delay_goodness_of_fit(samples: np.ndarray, law, bins: int = 40) -> float:
    """Chi-square p-value of delay samples against a continuous law's cdf."""
    samples = np.asarray(samples, dtype=float).ravel()
    edges = np.linspace(law.tau_min, law.tau_max, bins + 1)
    observed, _ = np.histogram(samples, edges)
    expected = np.diff(law.cdf(edges)) * samples.size
    keep = expected > 5
    observed, expected = observed[keep], expected[keep]
    expected *= observed.sum() / expected.sum()
    return float(stats.chisquare(observed, expected).pvalue)
