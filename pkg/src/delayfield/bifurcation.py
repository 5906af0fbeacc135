"""Linear stability of the stationary mean-field state.

Around ``(mu, v) = (0, lambda^2 theta / 2)`` the mean obeys a scalar linear
delay equation whose characteristic exponents ``xi`` solve

    xi + 1/theta - k L(xi) = 0,

with ``L`` the Laplace transform of the delay law and ``k`` the slope factor.
Hopf points are purely imaginary roots ``xi = i omega``; for the three
standard laws the modulus and phase conditions give parametric loci.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .core import (
    DelayLaw,
    Dirac,
    IntervalAveraged,
    ModelConfig,
    Uniform,
    activation_slope,
    delay_laplace,
    unit_interval_laplace,
)
from .errors import RootNotConverged

CERTIFICATE_TOL = 1e-10
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
INTERVAL_BRANCHES = (0, 1, 2, 3)
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DispersionContext:
    """Linearization data: ``theta``, the signed slope ``k`` and the delay law."""

    theta: float
    k: float
    law: DelayLaw

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if not math.isfinite(self.k):
            raise ValueError("slope factor must be finite")

    @classmethod
    def from_config(cls, config: ModelConfig, population: int = 0) -> "DispersionContext":
        """Context for a one-population (or diagonal block) configuration."""
        pop = config.populations[population]
        v_star = 0.5 * pop.lam**2 * pop.theta
        k = config.connectivity.j_bar[population, population] * activation_slope(config.sigmoid, v_star)
        return cls(pop.theta, float(k), config.delays[population][population])

    def with_law(self, law: DelayLaw) -> "DispersionContext":
        return DispersionContext(self.theta, self.k, law)


def slope_factor(j_bar: float, g: float, lam: float, theta: float = 1.0, convention: str = "reconciled") -> float:
    """Linearized feedback gain ``J g / sqrt(1 + g^2 v*)`` with ``v* = lambda^2 theta / 2``.

    ``convention="printed"`` divides by an extra ``sqrt(2 pi)``.
    """
    if not g > 0:
        raise ValueError(f"gain must be > 0, got {g}")
    k = j_bar * g / math.sqrt(1.0 + g * g * lam * lam * theta / 2.0)
    if convention == "reconciled":
        return k
    if convention == "printed":
        return k / math.sqrt(_TWO_PI)
    raise ValueError(f"unknown slope convention {convention!r}")


def dispersion_residual(ctx: DispersionContext, xi: complex) -> complex:
    xi = complex(xi)
    return xi + 1.0 / ctx.theta - ctx.k * delay_laplace(ctx.law, xi)


def pitchfork_threshold(theta: float, g: float, lam: float) -> float:
    """Positive ``J`` at which ``k theta = 1`` (a real root crosses zero)."""
    if not (theta > 0 and g > 0):
        raise ValueError("theta and g must be > 0")
    return math.sqrt(1.0 + g * g * lam * lam * theta / 2.0) / (g * theta)


def dirac_lambda_star(j_bar: float, g: float, theta: float = 1.0) -> float | None:
    """Noise level above which no Hopf point exists for point delays.

    Solves ``|k(lambda)| theta = 1``; ``None`` if ``|J| g theta <= 1``.
    """
    r = (abs(j_bar) * g * theta) ** 2 - 1.0
    if r <= 0:
        return None
    return math.sqrt(2.0 * r / (g * g * theta))


@dataclass(frozen=True)
class HopfPoint:
    """A purely imaginary root ``i omega`` of the dispersion relation.

    ``params`` holds the critical parameters (for instance ``tau`` and
    ``delta``); ``context`` rebuilds the linearization at that point.
    """

    params: dict
    omega: float
    branch: int
    residual: float
    context: DispersionContext = field(repr=False, compare=False)


@dataclass(frozen=True)
class HopfLocus:
    points: tuple
    sweep: str

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def column(self, name: str) -> np.ndarray:
        if name == "omega":
            return np.array([p.omega for p in self.points])
        if name == "branch":
            return np.array([p.branch for p in self.points], dtype=int)
        return np.array([p.params[name] for p in self.points])

    def branch(self, index: int) -> "HopfLocus":
        return HopfLocus(tuple(p for p in self.points if p.branch == index), self.sweep)


def _residual_derivative(ctx: DispersionContext, xi: complex) -> complex:
    h = 1e-7 * (1.0 + abs(xi))
    return (dispersion_residual(ctx, xi + h) - dispersion_residual(ctx, xi - h)) / (2.0 * h)


def verify_hopf(point: HopfPoint, ctx: DispersionContext | None = None) -> bool:
    """Certify that ``i omega`` is a simple root of the dispersion relation for ``ctx``."""
    ctx = ctx if ctx is not None else point.context
    if not (point.omega > 0 and math.isfinite(point.omega)):
        return False
    xi = 1j * point.omega
    if not abs(dispersion_residual(ctx, xi)) < CERTIFICATE_TOL:
        return False
    d = _residual_derivative(ctx, xi)
    return bool(cmath.isfinite(d) and abs(d) > 1e-8)


def _make_point(ctx: DispersionContext, params: dict, omega: float, branch: int) -> HopfPoint:
    res = abs(dispersion_residual(ctx, 1j * omega))
    return HopfPoint(params, float(omega), branch, float(res), ctx)


def _phase_delay(omega: float, theta: float, gain: complex, branch: int) -> float:
    """Smallest nonnegative ``tau`` (plus ``branch`` periods) with
    ``exp(-i omega tau) = (i omega + 1/theta) / gain``."""
    phi = cmath.phase((1j * omega + 1.0 / theta) / gain)
    return ((-phi) % _TWO_PI + _TWO_PI * branch) / omega


def hopf_dirac(theta: float, k: float) -> tuple[float, float] | None:
    """Critical ``(omega, tau_H)`` for a point delay, or ``None`` if ``|k| theta <= 1``."""
    if k >= 0:
        raise ValueError("Hopf analysis assumes an inhibitory slope k < 0")
    if abs(k) * theta <= 1.0:
        return None
    omega = math.sqrt(k * k - 1.0 / theta**2)
    return omega, (math.pi - math.atan(omega * theta)) / omega


def hopf_dirac_point(theta: float, k: float) -> HopfPoint | None:
    res = hopf_dirac(theta, k)
    if res is None:
        return None
    omega, tau = res
    return _make_point(DispersionContext(theta, k, Dirac(tau)), {"tau": tau}, omega, 0)


def hopf_dirac_locus(j_bar: float, g: float, theta: float, lambdas: Iterable[float]) -> HopfLocus:
    """Hopf curve ``tau_H(lambda)`` in the noise/delay plane."""
    pts = []
    for lam in lambdas:
        k = slope_factor(j_bar, g, lam, theta)
        res = hopf_dirac(theta, k)
        if res is None:
            continue
        omega, tau = res
        ctx = DispersionContext(theta, k, Dirac(tau))
        pts.append(_make_point(ctx, {"lambda": float(lam), "tau": tau}, omega, 0))
    return HopfLocus(tuple(pts), "lambda")


def hopf_uniform(theta: float, k: float, omega_grid: Sequence[float], branch: int = 0) -> HopfLocus:
    """Hopf locus in the ``(tau, delta)`` plane, parametrized by ``Omega = omega delta / 2``.

    Each ``Omega`` with ``k^2 sin^2(Omega) / Omega^2 > 1/theta^2`` yields
    ``omega = sqrt(k^2 sinc^2 - 1/theta^2)``, ``delta = 2 Omega / omega`` and the
    delay from the phase condition. Points whose law would charge negative
    delays (``delta > 2 tau``) or that fail certification are dropped.
    """
    if k >= 0:
        raise ValueError("Hopf analysis assumes an inhibitory slope k < 0")
    pts = []
    for big in omega_grid:
        big = float(big)
        if not big > 0:
            continue
        s = math.sin(big) / big
        rad = k * k * s * s - 1.0 / theta**2
        if rad <= 0:
            continue
        omega = math.sqrt(rad)
        delta = 2.0 * big / omega
        tau = _phase_delay(omega, theta, k * s, branch)
        if delta > 2.0 * tau:
            continue
        ctx = DispersionContext(theta, k, Uniform(tau, delta))
        p = _make_point(ctx, {"tau": tau, "delta": delta, "Omega": big}, omega, branch)
        if verify_hopf(p):
            pts.append(p)
    return HopfLocus(tuple(pts), "Omega")


def hopf_interval(
    theta: float, k: float, omega_grid: Sequence[float], branches: Iterable[int] = INTERVAL_BRANCHES
) -> HopfLocus:
    """Hopf loci in the ``(a, tau_s)`` plane, parametrized by ``Omega = omega a``.

    The modulus condition ``k^2 |L0(i Omega)|^2 = omega^2 + 1/theta^2`` fixes
    ``omega`` and hence ``a = Omega / omega``; the phase fixes ``tau_s`` up to
    whole periods, enumerated by ``branches``.
    """
    if k >= 0:
        raise ValueError("Hopf analysis assumes an inhibitory slope k < 0")
    pts = []
    for big in omega_grid:
        big = float(big)
        if not big > 0:
            continue
        lz = unit_interval_laplace(1j * big)
        rad = k * k * abs(lz) ** 2 - 1.0 / theta**2
        if rad <= 0:
            continue
        omega = math.sqrt(rad)
        a = big / omega
        for b in branches:
            tau_s = _phase_delay(omega, theta, k * lz, b)
            ctx = DispersionContext(theta, k, IntervalAveraged(a, tau_s))
            p = _make_point(ctx, {"a": a, "tau_s": tau_s, "Omega": big}, omega, b)
            if verify_hopf(p):
                pts.append(p)
    return HopfLocus(tuple(pts), "Omega")


def _interval_pulsations(theta: float, k: float, a: float, n_scan: int = 4000) -> list[float]:
    # roots in omega of k^2 |L0(i omega a)|^2 - omega^2 - 1/theta^2; |L0| <= 1 bounds omega
    top = math.sqrt(max(k * k - 1.0 / theta**2, 0.0))
    if top == 0.0:
        return []

    def f(w):
        return k * k * abs(unit_interval_laplace(1j * w * a)) ** 2 - w * w - 1.0 / theta**2

    ws = np.linspace(1e-9, top * (1 + 1e-9), n_scan)
    fs = np.array([f(w) for w in ws])
    roots = []
    for i in range(n_scan - 1):
        if fs[i] == 0.0:
            roots.append(float(ws[i]))
        elif fs[i] * fs[i + 1] < 0:
            roots.append(float(optimize.brentq(f, ws[i], ws[i + 1], xtol=1e-15, rtol=1e-15)))
    return roots


def interval_first_hopf(
    theta: float, k: float, a: float, branches: Iterable[int] = INTERVAL_BRANCHES
) -> HopfPoint | None:
    """Hopf point with the smallest ``tau_s`` at interval length ``a``.

    Taken over every pulsation solving the modulus condition and every
    branch; ``None`` when no Hopf point exists at this ``a``.
    """
    if a == 0:
        p = hopf_dirac_point(theta, k)
        if p is None:
            return None
        ctx = DispersionContext(theta, k, IntervalAveraged(0.0, p.params["tau"]))
        return _make_point(ctx, {"a": 0.0, "tau_s": p.params["tau"]}, p.omega, 0)
    best = None
    for omega in _interval_pulsations(theta, k, a):
        lz = unit_interval_laplace(1j * omega * a)
        for b in branches:
            tau_s = _phase_delay(omega, theta, k * lz, b)
            if best is None or tau_s < best.params["tau_s"]:
                ctx = DispersionContext(theta, k, IntervalAveraged(a, tau_s))
                cand = _make_point(ctx, {"a": float(a), "tau_s": tau_s}, omega, b)
                if verify_hopf(cand):
                    best = cand
    return best


def interval_first_curve(theta: float, k: float, a_values: Iterable[float]) -> HopfLocus:
    """First-bifurcation curve ``tau_s*(a)`` sampled at ``a_values``."""
    pts = [p for a in a_values if (p := interval_first_hopf(theta, k, float(a))) is not None]
    return HopfLocus(tuple(pts), "a")


def characteristic_root(
    ctx: DispersionContext, xi_init: complex, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER
) -> complex:
    """Newton iteration on the dispersion relation with a central-difference derivative.

    Raises
    ------
    RootNotConverged
        If ``|residual| >= tol`` after ``max_iter`` iterations, carrying the
        last iterate.
    """
    xi = complex(xi_init)
    r = dispersion_residual(ctx, xi)
    for _ in range(max_iter):
        if abs(r) < tol:
            return xi
        d = _residual_derivative(ctx, xi)
        if d == 0 or not cmath.isfinite(d):
            break
        xi = xi - r / d
        r = dispersion_residual(ctx, xi)
        if not cmath.isfinite(r):
            break
    if abs(r) < tol:
        return xi
    raise RootNotConverged(f"Newton did not converge from {xi_init}: |residual|={abs(r):.3e}", xi, abs(r))


def rightmost_root(
    ctx: DispersionContext,
    re_range: tuple[float, float] = (-3.0, 2.0),
    im_max: float | None = None,
    n_re: int = 6,
    n_im: int = 40,
) -> complex:
    """Root with the largest real part found from a grid of Newton starts.

    The imaginary extent defaults to ``|k| + 1/theta + 10``; imaginary roots
    of a stable system cannot exceed ``|k| + 1/theta`` in modulus when
    ``Re xi >= 0``, so the grid covers every possibly unstable root.
    """
    im_max = im_max if im_max is not None else abs(ctx.k) + 1.0 / ctx.theta + 10.0
    best = None
    for re in np.linspace(re_range[0], re_range[1], n_re):
        for im in np.linspace(0.0, im_max, n_im):
            try:
                z = characteristic_root(ctx, complex(re, im))
            except RootNotConverged:
                continue
            if best is None or z.real > best.real:
                best = z
    if best is None:
        raise RootNotConverged("no root found from the start grid", complex(0), math.inf)
    return best
