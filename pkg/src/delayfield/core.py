"""Shared model types: sigmoids, populations, connectivity and delay laws.

Delay laws are expressed over nonnegative delay values ``u``; a law ``eta``
enters the dynamics through integrals of the form ``int h(t - u) deta(u)``.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

SQRT_2PI = math.sqrt(2.0 * math.pi)

DEFAULT_QUADRATURE_NODES = 32

# Below this modulus the closed-form transforms lose digits to cancellation,
# so a Taylor series is used instead.
_SERIES_RADIUS = 0.25


class SigmoidKind(str, enum.Enum):
    """Centered error-function sigmoids.

    ``ERF_CENTERED`` is ``(1/sqrt(2 pi)) int_0^{g x} exp(-t^2/2) dt`` which is
    bounded by 1/2 and has slope ``g / sqrt(2 pi)`` at the origin.
    ``ERF_UNIT_SLOPE`` is the same curve scaled by ``sqrt(2 pi)``; its slope at
    the origin is exactly ``g``.
    """

    ERF_CENTERED = "erf_centered"
    ERF_UNIT_SLOPE = "erf_unit_slope"


@dataclass(frozen=True)
class SigmoidSpec:
    kind: SigmoidKind = SigmoidKind.ERF_CENTERED
    gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SigmoidKind(self.kind))
        if not self.gain > 0:
            raise ValueError(f"sigmoid gain must be > 0, got {self.gain}")

    @property
    def amplitude(self) -> float:
        """Multiplier applied to ``Phi(g x) - 1/2``."""
        return 1.0 if self.kind is SigmoidKind.ERF_CENTERED else SQRT_2PI

    @property
    def bound(self) -> float:
        return 0.5 * self.amplitude

    def __call__(self, x):
        return sigmoid_eval(self, x)


@dataclass(frozen=True)
class PopulationParams:
    theta: float
    lam: float = 0.0
    input: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class Connectivity:
    j_bar: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        j = np.atleast_2d(np.asarray(self.j_bar, dtype=float))
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if j.ndim != 2 or j.shape[0] != j.shape[1] or j.shape[0] < 1:
            raise ValueError(f"j_bar must be a square P x P matrix, got shape {j.shape}")
        if s.shape != j.shape:
            raise ValueError(f"sigma shape {s.shape} does not match j_bar shape {j.shape}")
        if np.any(s < 0):
            raise ValueError("sigma entries must be >= 0")
        j.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "j_bar", j)
        object.__setattr__(self, "sigma", s)

    @property
    def n_populations(self) -> int:
        return self.j_bar.shape[0]

    @classmethod
    def scalar(cls, j_bar: float, sigma: float = 0.0) -> "Connectivity":
        return cls(np.array([[j_bar]]), np.array([[sigma]]))


# ---------------------------------------------------------------------------
# Delay laws


class DelayLaw:
    """Probability law of transmission delays, supported on ``[0, tau_max]``."""

    kind: str = ""

    @property
    def tau_max(self) -> float:
        raise NotImplementedError

    @property
    def tau_min(self) -> float:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        nodes, weights = self.quadrature(DEFAULT_QUADRATURE_NODES)
        return float(np.dot(nodes, weights))

    @property
    def is_point_mass(self) -> bool:
        return self.tau_max == self.tau_min

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def quadrature(self, n_nodes: int = DEFAULT_QUADRATURE_NODES) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def laplace(self, xi: complex) -> complex:
        raise NotImplementedError

    def cdf(self, u):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Dirac(DelayLaw):
    tau: float
    kind = "dirac"

    def __post_init__(self):
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise ValueError(f"Dirac delay must be finite and >= 0, got {self.tau}")

    @property
    def tau_max(self) -> float:
        return float(self.tau)

    @property
    def tau_min(self) -> float:
        return float(self.tau)

    @property
    def mean(self) -> float:
        return float(self.tau)

    def sample(self, rng, size=None):
        if size is None:
            return float(self.tau)
        return np.full(size, float(self.tau))

    def quadrature(self, n_nodes=DEFAULT_QUADRATURE_NODES):
        _check_nodes(n_nodes)
        return np.array([float(self.tau)]), np.array([1.0])

    def laplace(self, xi):
        return cmath.exp(-complex(xi) * self.tau)

    def cdf(self, u):
        return np.where(np.asarray(u) >= self.tau, 1.0, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "tau": self.tau}


@dataclass(frozen=True)
class Uniform(DelayLaw):
    """Uniform delays on ``[tau - delta/2, tau + delta/2]``."""

    tau: float
    delta: float
    kind = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.tau) and math.isfinite(self.delta)):
            raise ValueError("uniform delay parameters must be finite")
        if self.delta < 0:
            raise ValueError(f"uniform spread delta must be >= 0, got {self.delta}")
        if self.tau - self.delta / 2 < 0:
            raise ValueError(
                f"uniform law charges negative delays: delta={self.delta} > 2*tau={2 * self.tau}"
            )

    @property
    def tau_max(self) -> float:
        return self.tau + self.delta / 2

    @property
    def tau_min(self) -> float:
        return self.tau - self.delta / 2

    @property
    def mean(self) -> float:
        return float(self.tau)

    def sample(self, rng, size=None):
        lo, hi = self.tau_min, self.tau_max
        out = rng.uniform(lo, hi, size)
        return float(out) if size is None else out

    def quadrature(self, n_nodes=DEFAULT_QUADRATURE_NODES):
        _check_nodes(n_nodes)
        if self.delta == 0:
            return np.array([float(self.tau)]), np.array([1.0])
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        return self.tau + 0.5 * self.delta * x, 0.5 * w

    def laplace(self, xi):
        xi = complex(xi)
        z = 0.5 * xi * self.delta
        return cmath.exp(-xi * self.tau) * _sinhc(z)

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        if self.delta == 0:
            return np.where(u >= self.tau, 1.0, 0.0)
        return np.clip((u - self.tau_min) / self.delta, 0.0, 1.0)

    def to_dict(self):
        return {"kind": self.kind, "tau": self.tau, "delta": self.delta}


@dataclass(frozen=True)
class IntervalAveraged(DelayLaw):
    """Averaged delay law for neurons placed uniformly on ``[0, a]``.

    The distance ``r`` between two independent uniform points has density
    ``2/a - 2 r / a^2`` on ``[0, a]``; with unit propagation speed the delay
    is ``tau_s + r``.
    """

    a: float
    tau_s: float = 0.0
    kind = "interval"

    def __post_init__(self):
        if not (self.a >= 0 and math.isfinite(self.a)):
            raise ValueError(f"interval length a must be finite and >= 0, got {self.a}")
        if not (self.tau_s >= 0 and math.isfinite(self.tau_s)):
            raise ValueError(f"synaptic delay tau_s must be finite and >= 0, got {self.tau_s}")

    @property
    def tau_max(self) -> float:
        return self.tau_s + self.a

    @property
    def tau_min(self) -> float:
        return float(self.tau_s)

    @property
    def mean(self) -> float:
        return self.tau_s + self.a / 3

    def density(self, u):
        r = np.asarray(u, dtype=float) - self.tau_s
        inside = (r >= 0) & (r <= self.a)
        return np.where(inside, 2.0 / self.a - 2.0 * r / self.a**2, 0.0)

    def sample(self, rng, size=None):
        # r = a * (1 - sqrt(1 - U)) inverts the cdf 2r/a - r^2/a^2
        uu = rng.uniform(0.0, 1.0, size)
        out = self.tau_s + self.a * (1.0 - np.sqrt(1.0 - uu))
        return float(out) if size is None else out

    def quadrature(self, n_nodes=DEFAULT_QUADRATURE_NODES):
        _check_nodes(n_nodes)
        if self.a == 0:
            return np.array([float(self.tau_s)]), np.array([1.0])
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        r = 0.5 * self.a * (x + 1.0)
        return self.tau_s + r, w * (1.0 - r / self.a)

    def laplace(self, xi):
        xi = complex(xi)
        return cmath.exp(-xi * self.tau_s) * unit_interval_laplace(xi * self.a)

    def cdf(self, u):
        r = np.clip(np.asarray(u, dtype=float) - self.tau_s, 0.0, self.a)
        if self.a == 0:
            return np.where(np.asarray(u) >= self.tau_s, 1.0, 0.0)
        return 2 * r / self.a - (r / self.a) ** 2

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "tau_s": self.tau_s}


@dataclass(frozen=True)
class Empirical(DelayLaw):
    """Equal-weight atoms at observed delay values."""

    samples: tuple
    kind = "empirical"

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float).ravel()
        if arr.size == 0:
            raise ValueError("empirical delay law needs at least one sample")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("empirical delays must be finite and >= 0")
        object.__setattr__(self, "samples", tuple(float(s) for s in arr))

    @property
    def _arr(self) -> np.ndarray:
        return np.asarray(self.samples)

    @property
    def tau_max(self) -> float:
        return max(self.samples)

    @property
    def tau_min(self) -> float:
        return min(self.samples)

    @property
    def mean(self) -> float:
        return float(np.mean(self._arr))

    def sample(self, rng, size=None):
        out = rng.choice(self._arr, size=size)
        return float(out) if size is None else out

    def quadrature(self, n_nodes=DEFAULT_QUADRATURE_NODES):
        _check_nodes(n_nodes)
        nodes, counts = np.unique(self._arr, return_counts=True)
        return nodes, counts / counts.sum()

    def laplace(self, xi):
        return complex(np.mean(np.exp(-complex(xi) * self._arr)))

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.searchsorted(np.sort(self._arr), u, side="right") / len(self.samples)

    def to_dict(self):
        return {"kind": self.kind, "samples": list(self.samples)}


def delay_law_from_dict(d: dict) -> DelayLaw:
    d = dict(d)
    kind = d.pop("kind", None)
    builders = {"dirac": Dirac, "uniform": Uniform, "interval": IntervalAveraged, "empirical": Empirical}
    if kind not in builders:
        raise ValueError(f"unknown delay law kind {kind!r}; expected one of {sorted(builders)}")
    if kind == "empirical":
        return Empirical(tuple(d.pop("samples")))
    return builders[kind](**d)


def _check_nodes(n_nodes: int) -> None:
    if int(n_nodes) < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")


def _sinhc(z: complex) -> complex:
    if abs(z) < _SERIES_RADIUS:
        # sinh(z)/z = sum z^(2n) / (2n+1)!
        z2 = z * z
        term, total = 1.0 + 0j, 1.0 + 0j
        for n in range(1, 12):
            term *= z2 / ((2 * n) * (2 * n + 1))
            total += term
        return total
    return cmath.sinh(z) / z


def unit_interval_laplace(z: complex) -> complex:
    """Laplace transform of the density ``2 - 2r`` on ``[0, 1]`` at ``z``.

    Equals ``(2/z) (1 - (1 - exp(-z)) / z)``, with value 1 at ``z = 0``.
    """
    z = complex(z)
    if abs(z) < _SERIES_RADIUS:
        # 2 * sum (-z)^m / (m+2)!
        term = 1.0 + 0j
        total = 1.0 + 0j
        for m in range(1, 20):
            term *= -z / (m + 2)
            total += term
        return total
    return (2.0 / z) * (1.0 - (1.0 - cmath.exp(-z)) / z)


# ---------------------------------------------------------------------------
# Model configuration


@dataclass(frozen=True)
class ModelConfig:
    populations: tuple
    connectivity: Connectivity
    delays: tuple
    sigmoid: SigmoidSpec = field(default_factory=lambda: SigmoidSpec(SigmoidKind.ERF_UNIT_SLOPE))

    def __post_init__(self):
        pops = tuple(self.populations)
        if not pops:
            raise ValueError("at least one population is required")
        p = len(pops)
        if self.connectivity.n_populations != p:
            raise ValueError(
                f"connectivity is {self.connectivity.n_populations}x{self.connectivity.n_populations}"
                f" but there are {p} populations"
            )
        delays = tuple(tuple(row) for row in self.delays)
        if len(delays) != p or any(len(row) != p for row in delays):
            raise ValueError(f"delays must be a {p}x{p} matrix of delay laws")
        for row in delays:
            for law in row:
                if not isinstance(law, DelayLaw):
                    raise TypeError(f"delay entries must be DelayLaw instances, got {type(law).__name__}")
        object.__setattr__(self, "populations", pops)
        object.__setattr__(self, "delays", delays)

    @property
    def n_populations(self) -> int:
        return len(self.populations)

    @property
    def tau_max(self) -> float:
        return max(law.tau_max for row in self.delays for law in row)

    @property
    def tau_min(self) -> float:
        return min(law.tau_min for row in self.delays for law in row)

    @property
    def theta(self) -> np.ndarray:
        return np.array([p.theta for p in self.populations])

    @property
    def lam(self) -> np.ndarray:
        return np.array([p.lam for p in self.populations])

    @property
    def inputs(self) -> np.ndarray:
        return np.array([p.input for p in self.populations])

    @classmethod
    def one_population(
        cls,
        *,
        theta: float = 1.0,
        lam: float = 0.0,
        input: float = 0.0,
        j_bar: float = 0.0,
        sigma: float = 0.0,
        delay: DelayLaw | None = None,
        sigmoid: SigmoidSpec | None = None,
    ) -> "ModelConfig":
        return cls(
            populations=(PopulationParams(theta, lam, input),),
            connectivity=Connectivity.scalar(j_bar, sigma),
            delays=((delay if delay is not None else Dirac(0.0),),),
            sigmoid=sigmoid if sigmoid is not None else SigmoidSpec(SigmoidKind.ERF_UNIT_SLOPE),
        )

    def replace_delays(self, law: DelayLaw) -> "ModelConfig":
        """Copy with every population pair sharing ``law``."""
        p = self.n_populations
        return ModelConfig(self.populations, self.connectivity, tuple((law,) * p for _ in range(p)), self.sigmoid)

    def to_dict(self) -> dict:
        return {
            "populations": [{"theta": p.theta, "lambda": p.lam, "input": p.input} for p in self.populations],
            "connectivity": {
                "j_bar": self.connectivity.j_bar.tolist(),
                "sigma": self.connectivity.sigma.tolist(),
            },
            "delays": [[law.to_dict() for law in row] for row in self.delays],
            "sigmoid": {"kind": self.sigmoid.kind.value, "gain": self.sigmoid.gain},
        }


# ---------------------------------------------------------------------------
# Operations


def sigmoid_eval(s: SigmoidSpec, x):
    """Evaluate the centered erf sigmoid ``s`` at ``x`` (scalar or array)."""
    out = s.amplitude * 0.5 * special.erf(s.gain * np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def gaussian_mean_activation(s: SigmoidSpec, mu, v):
    """``E[S(X)]`` for ``X ~ N(mu, v)``.

    For erf sigmoids the Gaussian average is the same sigmoid evaluated at
    ``mu / sqrt(1 + g^2 v)``.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("variance must be >= 0")
    mu = np.asarray(mu, dtype=float)
    return sigmoid_eval(s, mu / np.sqrt(1.0 + s.gain**2 * v))


def activation_slope(s: SigmoidSpec, v: float) -> float:
    """``d/dmu E[S(X)]`` at ``mu = 0`` for ``X ~ N(mu, v)``."""
    return s.amplitude * s.gain / (SQRT_2PI * math.sqrt(1.0 + s.gain**2 * v))


def delay_sample(law: DelayLaw, rng: np.random.Generator, size=None):
    return law.sample(rng, size)


def delay_quadrature(law: DelayLaw, n_nodes: int = DEFAULT_QUADRATURE_NODES) -> list[tuple[float, float]]:
    nodes, weights = law.quadrature(n_nodes)
    return list(zip(nodes.tolist(), weights.tolist()))


def delay_laplace(law: DelayLaw, xi: complex) -> complex:
    """``int exp(-xi u) deta(u)`` in closed form."""
    return law.laplace(xi)


def quadrature_laplace(law: DelayLaw, xi: complex, n_nodes: int = DEFAULT_QUADRATURE_NODES) -> complex:
    """Laplace transform evaluated from the quadrature rule (independent check)."""
    nodes, weights = law.quadrature(n_nodes)
    return complex(np.sum(weights * np.exp(-complex(xi) * nodes)))
