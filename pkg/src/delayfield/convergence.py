"""Empirical propagation of chaos.

The network and mean-field particles are coupled through shared noise and
initial conditions; the squared sup-distance between them should shrink
like ``1 / min_g N_g``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import ModelConfig
from .errors import DivergenceError
from .grid import SimGrid
from .meanfield import integrate_moments, stationary_point
from .network import (
    ChaoticGaussian,
    SampledDelays,
    build_realization,
    pairwise_correlation,
    simulate_coupled_pair,
    simulate_network,
)

N_PROBES = 16
N_PAIRS = 32


@dataclass
class ConvergenceReport:
    sizes: np.ndarray
    errors: np.ndarray
    stderr: np.ndarray
    slope: float
    slope_ci: tuple[float, float]
    intercept: float
    failures: np.ndarray
    trial_errors: list = field(repr=False, default_factory=list)

    @property
    def exact_coupling(self) -> bool:
        return bool(np.all(self.errors == 0))

    @property
    def constant(self) -> float:
        """Fitted ``C`` in ``error ~ C N^slope``."""
        return math.exp(self.intercept) if math.isfinite(self.intercept) else math.nan

    def rows(self):
        for n, e, s in zip(self.sizes, self.errors, self.stderr):
            yield int(n), float(e), float(s)


def fit_loglog(sizes, errors) -> tuple[float, float, tuple[float, float]]:
    """Least-squares slope and intercept of ``log(errors)`` on ``log(sizes)``.

    Returns ``(slope, intercept, 95% confidence interval of the slope)``.
    """
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    res = stats.linregress(x, y)
    if x.size > 2:
        q = stats.t.ppf(0.975, x.size - 2)
        ci = (res.slope - q * res.stderr, res.slope + q * res.stderr)
    else:
        ci = (math.nan, math.nan)
    return float(res.slope), float(res.intercept), ci


def _pop_sizes(n: int, ratios) -> list[int]:
    ratios = np.asarray(ratios, dtype=float)
    return [int(round(n * r / ratios.min())) for r in ratios]


def _trial_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence((seed, k)).generate_state(1)[0])


def _default_init(config: ModelConfig) -> ChaoticGaussian:
    st = stationary_point(config)
    return ChaoticGaussian(0.0, float(st.v[0]))


def coupling_experiment(
    config: ModelConfig,
    sizes,
    trials: int = 8,
    T: float = 5.0,
    dt: float = 2e-3,
    seed: int = 0,
    *,
    topology=None,
    pop_ratios=None,
    init: ChaoticGaussian | None = None,
    n_probes: int = N_PROBES,
    workers: int | None = None,
) -> ConvergenceReport:
    """Estimate ``E[max_probe sup_t |X^i - Xbar^i|^2]`` for each network size.

    Each trial draws a fresh delay realization and probe set; the noise seed
    of trial ``k`` is shared across sizes (common random numbers). ``sizes``
    index the smallest population; ``pop_ratios`` scales the others.
    ``workers > 1`` runs trials in threads; results do not depend on it.
    """
    sizes = np.asarray(sorted(int(n) for n in sizes))
    if sizes.size < 2:
        raise ValueError("need at least two network sizes")
    if trials < 4:
        raise ValueError("need at least four trials per size")
    pop_ratios = pop_ratios or (1,) * config.n_populations
    init = init or _default_init(config)
    grid = SimGrid(dt, T)
    mf = integrate_moments(config, grid, history=(init.mu0, init.v0))

    def job(n: int, k: int):
        pop_sizes = _pop_sizes(n, pop_ratios)
        trial_seed = _trial_seed(seed, k)
        real = build_realization(config, pop_sizes, topology or SampledDelays(), seed=trial_seed + n)
        rng = np.random.default_rng((seed, k, n))
        total = sum(pop_sizes)
        probes = rng.choice(total, size=min(n_probes, total), replace=False)
        try:
            run = simulate_coupled_pair(config, real, grid, mf, init, seed=trial_seed, record=())
        except DivergenceError:
            return None
        return float(np.max(run.sup_sq_error[probes]))

    jobs = [(int(n), k) for n in sizes for k in range(trials)]
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            outcomes = list(ex.map(lambda nk: job(*nk), jobs))
    else:
        outcomes = [job(*nk) for nk in jobs]

    errors, stderr, failures, per_trial = [], [], [], []
    for i in range(sizes.size):
        chunk = outcomes[i * trials:(i + 1) * trials]
        vals = np.asarray([x for x in chunk if x is not None])
        per_trial.append(vals)
        failures.append(trials - vals.size)
        errors.append(vals.mean() if vals.size else math.nan)
        stderr.append(vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else math.nan)

    errors = np.asarray(errors)
    ok = np.isfinite(errors) & (errors > 0)
    if ok.sum() >= 2:
        slope, intercept, ci = fit_loglog(sizes[ok], errors[ok])
    else:
        slope, intercept, ci = math.nan, math.nan, (math.nan, math.nan)
    return ConvergenceReport(
        sizes, errors, np.asarray(stderr), slope, ci, intercept, np.asarray(failures), per_trial
    )


@dataclass
class DecorrelationReport:
    sizes: np.ndarray
    mean_abs_corr: np.ndarray
    stderr: np.ndarray
    samples: list = field(repr=False)
    p_value: float = math.nan
    degenerate: bool = False


def chaos_decorrelation(
    config: ModelConfig,
    sizes,
    trials: int = 4,
    seed: int = 0,
    *,
    T: float = 100.0,
    dt: float = 5e-3,
    init=None,
    n_pairs: int = N_PAIRS,
) -> DecorrelationReport:
    """Mean absolute Pearson correlation of random distinct neuron pairs.

    Correlations use the second half of each run. ``p_value`` is a one-sided
    Mann-Whitney test that the smallest size has larger ``|corr|`` than the
    largest. ``degenerate`` flags runs where every pair is perfectly
    correlated or constant.
    """
    sizes = np.asarray(sorted(int(n) for n in sizes))
    init = init or _default_init(config)
    grid = SimGrid(dt, T)
    stride = max(1, grid.n_steps // 20000)
    samples, means, errs = [], [], []
    degenerate = True
    for n in sizes:
        vals = []
        for k in range(trials):
            rng = np.random.default_rng((seed, k, int(n)))
            nodes = rng.choice(n, size=(n_pairs, 2), replace=True)
            nodes = nodes[nodes[:, 0] != nodes[:, 1]]
            while nodes.shape[0] < n_pairs:
                extra = rng.choice(n, size=2, replace=False)
                nodes = np.vstack([nodes, extra])
            trial_seed = _trial_seed(seed, k)
            real = build_realization(config, [int(n)], seed=trial_seed + int(n))
            traj = simulate_network(
                config, real, grid, init, seed=trial_seed, record=np.unique(nodes), stride=stride
            )
            corr = pairwise_correlation(traj, [tuple(p) for p in nodes])
            if not np.all(np.isnan(corr) | (np.abs(corr - 1) < 1e-12)):
                degenerate = False
            vals.extend(np.abs(corr).tolist())
        vals = np.asarray(vals)
        samples.append(vals)
        fin = vals[np.isfinite(vals)]
        means.append(fin.mean() if fin.size else math.nan)
        errs.append(fin.std(ddof=1) / math.sqrt(fin.size) if fin.size > 1 else math.nan)
    p = math.nan
    a, b = samples[0], samples[-1]
    a, b = a[np.isfinite(a)], b[np.isfinite(b)]
    if a.size and b.size and not degenerate:
        p = float(stats.mannwhitneyu(a, b, alternative="greater").pvalue)
    return DecorrelationReport(sizes, np.asarray(means), np.asarray(errs), samples, p, degenerate)
