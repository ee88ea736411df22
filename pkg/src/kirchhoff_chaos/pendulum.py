"""Normalized pendulum: periodic orbits, the separatrix, and the Melnikov function
of the coupled pendulum system.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

# half-width beyond which 2/cosh(s) < 1e-16
TAIL = math.acosh(2e16)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


def _check_energy(a: float) -> None:
    if not 0.0 < a < 2.0:
        raise ValueError(f"pendulum energy must lie in (0, 2), got {a}")


def _gauss(f, lo: float, hi: float, panels: int) -> float:
    edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    s = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return float(np.sum(w * f(s)))


def _gauss_checked(f, lo: float, hi: float, panels: int, tol: float) -> float:
    coarse = _gauss(f, lo, hi, panels)
    fine = _gauss(f, lo, hi, 2 * panels)
    err = abs(fine - coarse)
    if err > tol:
        raise QuadratureError("composite Gauss-Legendre did not converge", err)
    return fine


def period_quadrature(a: float) -> float:
    """T(a) = 4 int_0^{pi/2} dphi / sqrt(1 - (a/2) sin^2 phi), from sin(xi/2) = sqrt(a/2) sin phi."""
    _check_energy(a)
    k2 = 0.5 * a
    f = lambda ph: 1.0 / np.sqrt(1.0 - k2 * np.sin(ph) ** 2)
    return 4.0 * _gauss_checked(f, 0.0, 0.5 * math.pi, 16, 1e-13)


@dataclass(frozen=True)
class PendulumOrbit:
    """Periodic solution of xi'' = -sin xi with energy a, xi(0) = 0, eta(0) > 0."""

    a: float
    T: float

    @property
    def modulus(self) -> float:
        return 0.5 * self.a

    def __call__(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        sn, cn, _, _ = special.ellipj(t, self.modulus)
        k = math.sqrt(self.modulus)
        return 2.0 * np.arcsin(k * sn), 2.0 * k * cn

    def xi(self, t) -> np.ndarray:
        return self(t)[0]

    def eta(self, t) -> np.ndarray:
        return self(t)[1]

    def energy(self, t) -> np.ndarray:
        xi, eta = self(t)
        return 0.5 * eta**2 + 1.0 - np.cos(xi)


def pendulum_orbit(a: float) -> PendulumOrbit:
    _check_energy(a)
    return PendulumOrbit(float(a), period_quadrature(a))


def separatrix_q(s) -> np.ndarray:
    return 2.0 * np.arcsin(np.tanh(s))


def separatrix_p(s, branch: int = 1) -> np.ndarray:
    return branch * 2.0 / np.cosh(s)


def sin_separatrix(s) -> np.ndarray:
    """sin(q_h(s)) = 2 tanh(s)/cosh(s)."""
    return 2.0 * np.tanh(s) / np.cosh(s)


def melnikov(tau, a: float, panels: int = 64, tol: float = 1e-13) -> np.ndarray | float:
    """M(tau) = -(1/3) int p_h(tau + s) sin(xi_1*(s; a)) ds.

    The integral is taken over the window where p_h exceeds 1e-16, split into
    Gauss-Legendre panels; the value is cross-checked against a run with twice as
    many panels.
    """
    orbit = pendulum_orbit(a)
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    out = np.empty_like(taus)
    for i, tt in enumerate(taus):
        f = lambda s, tt=tt: separatrix_p(tt + s) * np.sin(orbit.xi(s))
        out[i] = -_gauss_checked(f, -tt - TAIL, -tt + TAIL, panels, tol) / 3.0
    return out if np.ndim(tau) else float(out[0])


def melnikov_slope0(a: float, h: float = 0.05) -> float:
    """M'(0) by Richardson-extrapolated central differences of :func:`melnikov`."""
    def central(step):
        return (melnikov(step, a) - melnikov(-step, a)) / (2.0 * step)

    d1, d2, d3 = central(h), central(h / 2), central(h / 4)
    r1 = (4.0 * d2 - d1) / 3.0
    r2 = (4.0 * d3 - d2) / 3.0
    return (16.0 * r2 - r1) / 15.0


def J(a: float) -> float:
    """int_0^inf sin(q_h(s)) sin(xi_1*(s; a)) ds, integrated period by period."""
    orbit = pendulum_orbit(a)
    f = lambda s: float(sin_separatrix(s) * np.sin(orbit.xi(s)))
    edges = np.arange(0.0, TAIL + orbit.T, 0.5 * orbit.T)
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(f, lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)
            total += val
    return total


def separatrix_limit_integral() -> float:
    """int_0^inf (2 sinh s / cosh^2 s)^2 ds, the a -> 2 limit of J (equal to 4/3)."""
    f = lambda s: (2.0 * np.sinh(s) / np.cosh(s) ** 2) ** 2
    return _gauss_checked(f, 0.0, TAIL, 64, 1e-14)


@lru_cache(maxsize=8)
def find_a0(grid: int = 80, xtol: float = 1e-12) -> float:
    """Smallest a such that |J(a') - 4/3| <= 2/3 for every a' in [a, 2).

    A grid over (0, 2) locates the last failure of the bound; bisection refines
    the boundary between that point and the next grid value.
    """
    target = 4.0 / 3.0
    aa = np.linspace(0.0, 2.0, grid + 1)[1:-1]
    ok = np.array([abs(J(x) - target) <= 2.0 / 3.0 for x in aa])
    if ok.all():
        lo = 1e-6
        return lo
    last_bad = np.nonzero(~ok)[0][-1]
    if last_bad == len(aa) - 1:
        raise RuntimeError("the J bound fails next to a = 2")
    lo, hi = aa[last_bad], aa[last_bad + 1]
    g = lambda x: abs(J(x) - target) - 2.0 / 3.0
    return float(optimize.brentq(g, lo, hi, xtol=xtol))
