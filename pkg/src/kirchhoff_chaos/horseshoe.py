"""Partially hyperbolic periodic orbit of the coupled pendulums, its invariant
manifolds, the return map to the section {xi2 = 0 mod 2pi, eta2 > 0} and
itinerary targeting.

The system is

    xi1' = eta1 - mu1 eta2,   eta1' = -sin xi1,
    xi2' = eta2 - mu2 eta1,   eta2' = -lam sin xi2,

with (mu1, mu2) the couplings at ratio sigma. It is reversible under
(xi1, eta1, xi2, eta2) -> (-xi1, eta1, -xi2, eta2).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize
from scipy.interpolate import CubicSpline

from . import _fields, ode
from .cascade import coupled_energy
from .pendulum import find_a0, melnikov, melnikov_slope0, pendulum_orbit, separatrix_q
from .resonant import couplings, scaled_couplings

TWO_PI = 2.0 * math.pi
RTOL = 1e-13
ATOL = 1e-14


class ContinuationError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(f"{message}; residual history {['%.2e' % r for r in history]}")
        self.history = history


class ManifoldEscape(RuntimeError):
    pass


class TargetingError(RuntimeError):
    def __init__(self, message: str, prefix: list[int]):
        super().__init__(f"{message} (achieved prefix {prefix})")
        self.prefix = prefix


def _params(sigma: float, lam: float = 1.0) -> np.ndarray:
    mu1, mu2 = couplings(sigma)
    return np.array([mu1, mu2, lam])


def flow(y0, t_end: float, sigma: float, *, t0: float = 0.0, t_eval=None, events=(),
         rtol: float = RTOL, atol: float = ATOL) -> ode.Solution:
    return ode.solve(_fields.XIETA, _params(sigma), y0, (t0, t_end), rtol=rtol, atol=atol,
                     t_eval=t_eval, events=events)


def _flow_var(y0, t_end: float, sigma: float, t_eval=None, rtol: float = RTOL) -> ode.Solution:
    y = np.concatenate([np.asarray(y0, dtype=float), np.eye(4).ravel()])
    return ode.solve(_fields.XIETA_VAR, _params(sigma), y, (0.0, t_end), rtol=rtol, atol=ATOL,
                     t_eval=t_eval)


def vector_field(states, sigma: float) -> np.ndarray:
    p = _params(sigma)
    Y = np.atleast_2d(np.asarray(states, dtype=float))
    out = np.empty_like(Y)
    for i, y in enumerate(Y):
        _fields.xieta(0.0, y, p, out[i])
    return out if np.ndim(states) > 1 else out[0]


def divergence(state, sigma: float) -> float:
    """Trace of the Jacobian; the field has no diagonal entries, so this is zero."""
    mu1, mu2 = couplings(sigma)
    jac = np.array([[0.0, 1.0, 0.0, -mu1],
                    [-math.cos(state[0]), 0.0, 0.0, 0.0],
                    [0.0, -mu2, 0.0, 1.0],
                    [0.0, 0.0, -math.cos(state[2]), 0.0]])
    return float(np.trace(jac))


def involution(states) -> np.ndarray:
    s = np.array(states, dtype=float)
    s[..., 0] *= -1.0
    s[..., 2] *= -1.0
    return s


def _wrap(x):
    """Angle difference folded to (-pi, pi]."""
    return (np.asarray(x) + math.pi) % TWO_PI - math.pi


# ---------------------------------------------------------------- periodic orbit

@dataclass
class PeriodicOrbitSigma:
    sigma: float
    a: float
    T: float
    y0: np.ndarray
    fourier: np.ndarray                   # rfft of one period of samples, per component
    n_samples: int
    monodromy: np.ndarray
    multipliers: np.ndarray
    v_unstable: np.ndarray
    v_stable: np.ndarray
    c1_distance: float
    periodicity_residual: float
    reversibility_residual: float
    det_monodromy: float
    trace_integral: float
    newton_history: list[float] = field(default_factory=list)

    @property
    def energy(self) -> float:
        return float(coupled_energy(self.y0, self.sigma))

    @property
    def unstable_multiplier(self) -> float:
        return float(np.max(np.abs(self.multipliers)))

    def __call__(self, t) -> np.ndarray:
        """Trigonometric interpolant of the orbit (rows of states for array t)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = self.n_samples
        k = np.arange(self.fourier.shape[0])
        w = np.full(k.size, 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        ph = np.exp(1j * TWO_PI * np.outer(t / self.T, k))
        out = np.real(ph @ (w[:, None] * self.fourier)) / n
        return out

    def transport(self, thetas, which: str = "unstable") -> tuple[np.ndarray, np.ndarray]:
        """Orbit points and unit hyperbolic directions at the phases ``thetas`` (in [0, T]).

        Directions are obtained by carrying the eigenvector of the monodromy along
        the variational flow and are oriented so that the eta2 component is positive.
        """
        thetas = np.asarray(thetas, dtype=float)
        order = np.argsort(thetas)
        v0 = self.v_unstable if which == "unstable" else self.v_stable
        sol = _flow_var(self.y0, float(thetas[order][-1]) + 1e-9, self.sigma, t_eval=thetas[order])
        pts = np.empty((thetas.size, 4))
        dirs = np.empty((thetas.size, 4))
        for j, row in zip(order, sol.y):
            pts[j] = row[:4]
            v = row[4:].reshape(4, 4) @ v0
            v /= np.linalg.norm(v)
            dirs[j] = v if v[3] > 0 else -v
        return pts, dirs

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma, "a": self.a, "T": self.T, "y0": self.y0.tolist(),
            "multipliers": [[float(m.real), float(m.imag)] for m in self.multipliers],
            "c1_distance": self.c1_distance, "periodicity_residual": self.periodicity_residual,
            "reversibility_residual": self.reversibility_residual,
            "det_monodromy": self.det_monodromy, "trace_integral": self.trace_integral,
            "newton_history": self.newton_history,
        }


def _half_period_residual(eta, T, sigma):
    y0 = np.array([0.0, eta[0], math.pi, eta[1]])
    sol = _flow_var(y0, 0.5 * T, sigma)
    y = sol.y_final
    res = np.array([_wrap(y[0]), y[2] - math.pi])
    phi = y[4:].reshape(4, 4)
    jac = phi[np.ix_([0, 2], [1, 3])]
    return res, jac


def continue_periodic_orbit(sigma: float, a: float | None = None, *, tol: float = 1e-13,
                            max_iter: int = 30, n_samples: int = 256) -> PeriodicOrbitSigma:
    """T_a-periodic reversible orbit near the product of the libration of energy ``a``
    with the saddle of the second pendulum.

    Newton shooting on (eta1(0), eta2(0)) from the symmetry set
    {xi1 = 0, xi2 = pi}, requiring the orbit to hit that set again at T/2.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    a = find_a0() if a is None else float(a)
    T = pendulum_orbit(a).T
    eta = np.array([math.sqrt(2.0 * a), 0.0])
    history = []
    for _ in range(max_iter):
        res, jac = _half_period_residual(eta, T, sigma)
        history.append(float(np.max(np.abs(res))))
        if history[-1] <= tol:
            break
        step = np.linalg.solve(jac, -res)
        eta = eta + step
        if not np.all(np.isfinite(eta)) or (len(history) > 3 and history[-1] > 10 * history[0] + 1e-8):
            raise ContinuationError("Newton shooting diverged", history)
    else:
        raise ContinuationError("Newton shooting did not converge", history)

    y0 = np.array([0.0, eta[0], math.pi, eta[1]])
    tt = np.arange(n_samples) * (T / n_samples)
    full = _flow_var(y0, T, sigma, t_eval=np.append(tt, T))
    samples = full.y[:n_samples, :4]
    mono = full.y_final[4:].reshape(4, 4)
    mults, vecs = np.linalg.eig(mono)
    order = np.argsort(np.abs(mults))
    mults, vecs = mults[order], vecs[:, order]
    v_s, v_u = np.real(vecs[:, 0]), np.real(vecs[:, -1])
    v_s, v_u = v_s / np.linalg.norm(v_s), v_u / np.linalg.norm(v_u)

    periodicity = float(np.max(np.abs(np.array([_wrap(full.y_final[0] - y0[0]), full.y_final[1] - y0[1],
                                                _wrap(full.y_final[2] - y0[2]), full.y_final[3] - y0[3]]))))
    # reversibility checked on [-T/2, T/2] by an independent backward integration
    half = tt[tt <= 0.5 * T]
    back = flow(y0, -0.5 * T, sigma, t_eval=-half)
    mirrored = involution(back.y)
    rev = np.abs(mirrored - samples[: len(half)])
    rev[:, 0] = np.abs(_wrap(mirrored[:, 0] - samples[: len(half), 0]))
    rev[:, 2] = np.abs(_wrap(mirrored[:, 2] - samples[: len(half), 2]))

    unpert = pendulum_orbit(a)
    xi, et = unpert(tt)
    base = np.column_stack([xi, et, np.full_like(xi, math.pi), np.zeros_like(xi)])
    c0 = np.max(np.abs(samples - base))
    c1 = np.max(np.abs(vector_field(samples, sigma) - vector_field(base, 0.0)))
    trace_int = float(sum(divergence(s, sigma) for s in samples) * T / n_samples)

    return PeriodicOrbitSigma(
        sigma=float(sigma), a=a, T=T, y0=y0, fourier=np.fft.rfft(samples, axis=0), n_samples=n_samples,
        monodromy=mono, multipliers=mults, v_unstable=v_u, v_stable=v_s,
        c1_distance=float(c0 + c1), periodicity_residual=periodicity,
        reversibility_residual=float(rev.max()), det_monodromy=float(np.linalg.det(mono)),
        trace_integral=trace_int, newton_history=history)


# ---------------------------------------------------------------- section and return map

@dataclass(frozen=True)
class SectionPoint:
    """Point of {xi2 = 0, eta2 > 0}; ``xi2_turns`` keeps the lift of xi2 (multiple of 2 pi)."""

    xi1: float
    eta1: float
    eta2: float
    xi2_turns: int = 0

    def state(self) -> np.ndarray:
        return np.array([self.xi1, self.eta1, TWO_PI * self.xi2_turns, self.eta2])

    @classmethod
    def from_state(cls, y) -> "SectionPoint":
        return cls(float(y[0]), float(y[1]), float(y[3]), int(round(y[2] / TWO_PI)))


def section_eta2(xi1: float, eta1: float, level: float, sigma: float) -> float:
    """Positive eta2 placing (xi1, eta1, 0, eta2) on the given level of the conserved quantity."""
    k1, k2 = scaled_couplings(sigma)
    h1 = 0.5 * eta1 * eta1 + 1.0 - math.cos(xi1)
    b = sigma * k1 * k2 * eta1
    disc = b * b - 2.0 * k1 * (k2 * h1 - level)
    if disc < 0:
        raise ValueError("the energy level does not meet the section above this (xi1, eta1)")
    return (b + math.sqrt(disc)) / k1


def section_point_from_energy(xi1: float, eta1: float, orbit: PeriodicOrbitSigma) -> SectionPoint:
    return SectionPoint(float(xi1), float(eta1), section_eta2(xi1, eta1, orbit.energy, orbit.sigma))


_XI2_LATTICE = ode.Crossing(component=2, level=0.0, period=TWO_PI)


@dataclass(frozen=True)
class Passage:
    """Crossings of xi2 through multiples of 2 pi, split by the sign of eta2."""

    times: np.ndarray
    states: np.ndarray

    @property
    def signs(self) -> np.ndarray:
        return np.sign(self.states[:, 3]).astype(int)


def crossings(y0, sigma: float, count: int, t_max: float, t0: float = 0.0) -> Passage:
    """The first ``count`` crossings of xi2 through 2 pi Z after ``t0`` (fewer if t_max is reached)."""
    sol = flow(y0, t0 + t_max, sigma, t0=t0, events=[ode.Crossing(2, 0.0, TWO_PI, 0, count)])
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    return Passage(sol.event_t[0], sol.event_y[0])


def next_section_hit(y0, sigma: float, t_max: float = 400.0, t0: float = 0.0):
    """First later time where the orbit crosses xi2 = 0 mod 2 pi with eta2 > 0.

    Returns (time, state) or None when no hit occurs before ``t0 + t_max``.
    """
    chunk = 40.0
    start, y = t0, np.asarray(y0, dtype=float)
    while start < t0 + t_max:
        end = min(start + chunk, t0 + t_max)
        sol = flow(y, end, sigma, t0=start, events=[_XI2_LATTICE])
        for te, ye in zip(sol.event_t[0], sol.event_y[0]):
            if ye[3] > 0 and te - t0 > 1e-10:
                return float(te), ye
        if not sol.success:
            raise RuntimeError(f"integration failed: {sol.message}")
        start, y = end, sol.y_final
    return None


def poincare_map(pt: SectionPoint, sigma: float, t_max: float = 400.0):
    """(P(pt), return time), or (None, inf) when the orbit does not come back within t_max."""
    hit = next_section_hit(pt.state(), sigma, t_max)
    if hit is None:
        return None, math.inf
    t, y = hit
    return SectionPoint.from_state(y), t


def extract_symbols(times, T: float) -> np.ndarray:
    """omega_k = floor((t_k - t_{k-1}) / T)."""
    return np.floor(np.diff(np.asarray(times, dtype=float)) / T).astype(int)


# ---------------------------------------------------------------- invariant manifolds

SEED_DISTANCE = 1e-7


def unstable_section_curve(orbit: PeriodicOrbitSigma, n: int = 400, delta: float = SEED_DISTANCE,
                           t_max: float = 200.0) -> tuple[np.ndarray, np.ndarray]:
    """First hits of the section by the upper unstable branch, seeded along one period.

    Returns (phases, section states); rows are NaN where no hit was found.
    """
    thetas = np.arange(n) * (orbit.T / n)
    pts, dirs = orbit.transport(thetas, "unstable")
    out = np.full((n, 4), np.nan)
    for i in range(n):
        hit = next_section_hit(pts[i] + delta * dirs[i], orbit.sigma, t_max)
        if hit is not None:
            out[i] = hit[1]
    return thetas, out


def exit_side(y0, sigma: float, t_max: float = 400.0) -> tuple[int, float]:
    """After leaving the section at ``y0``: +1 and the return time if the next crossing
    of xi2 through 2 pi Z is on the section, -1 if it comes back with eta2 < 0, and
    0 if nothing happens before t_max."""
    p = crossings(y0, sigma, 1, t_max)
    if p.times.size == 0:
        return 0, math.inf
    return (1, float(p.times[0])) if p.states[0, 3] > 0 else (-1, math.inf)


def measure_M0(orbit: PeriodicOrbitSigma, n: int = 400) -> tuple[int, np.ndarray]:
    """Smallest return symbol over the section points of the unstable branch.

    Returns (M0, observed symbols) where the symbols are those of the upward exits.
    """
    _, curve = unstable_section_curve(orbit, n)
    syms = []
    for y in curve:
        if not np.all(np.isfinite(y)):
            continue
        y = y.copy()
        y[2] = 0.0
        side, r = exit_side(y, orbit.sigma)
        if side > 0:
            syms.append(int(math.floor(r / orbit.T)))
    syms = np.array(sorted(syms))
    if syms.size == 0:
        raise RuntimeError("no returning points found on the unstable branch")
    return int(syms[0]), syms


def _branch_crossing(pts, dirs, delta, sigma, level, backward, t_max):
    """States where seeded orbits first reach xi2 = level (forward or backward in time)."""
    out = np.full((len(pts), 4), np.nan)
    t_end = -t_max if backward else t_max
    ev = [ode.Crossing(2, level, 0.0, 1, 1)]
    for i, (p, v) in enumerate(zip(pts, dirs)):
        sol = flow(p + delta * v, t_end, sigma, events=ev)
        if sol.event_t[0].size:
            out[i] = sol.event_y[0][0]
    return out


def _normal_line_point(orbit, which, level, delta, n, t_max):
    """Point of the chosen manifold branch on {xi2 = level, xi1 = 0, eta1 > 0}.

    The seeding phase is found by sampling one period and refining the sign
    change of xi1 with Brent's method.
    """
    backward = which == "stable"
    thetas = np.arange(n + 1) * (orbit.T / n)
    pts, dirs = orbit.transport(thetas, which)
    hits = _branch_crossing(pts, dirs, delta, orbit.sigma, level, backward, t_max)
    if not np.all(np.isfinite(hits)):
        raise ManifoldEscape(f"{which} branch did not reach xi2 = {level:.6f}")
    x = _wrap(hits[:, 0])
    idx = [i for i in range(n) if x[i] < 0 <= x[i + 1] and hits[i, 1] > 0]
    if len(idx) != 1:
        raise ManifoldEscape(f"expected one crossing of xi1 = 0 with eta1 > 0, found {len(idx)}")

    def hit_at(theta):
        p, v = orbit.transport([theta], which)
        h = _branch_crossing(p, v, delta, orbit.sigma, level, backward, t_max)[0]
        if not np.isfinite(h[0]):
            raise ManifoldEscape(f"{which} branch lost at phase {theta}")
        return h

    i = idx[0]
    theta = optimize.brentq(lambda th: _wrap(hit_at(th)[0]), thetas[i], thetas[i + 1], xtol=1e-15, rtol=1e-15)
    return hit_at(theta)


def manifold_distance(tau: float, sigma: float, orbit: PeriodicOrbitSigma | None = None, *,
                      delta: float = SEED_DISTANCE, n: int = 64, refine: bool = True,
                      t_max: float = 200.0) -> float:
    """H1(z^s) - H1(z^u) on the line {xi1 = 0, xi2 = q_h(tau)} (upper branches).

    z^u is reached forward from the unstable seeds (xi2 near pi, passing to
    q_h(tau) + 2 pi), z^s backward from the stable seeds. With ``refine`` the
    seeding distance is halved until the gap agrees to three digits.
    """
    orbit = orbit if orbit is not None else continue_periodic_orbit(sigma)
    q = float(separatrix_q(tau))

    def gap(d):
        zu = _normal_line_point(orbit, "unstable", q + TWO_PI, d, n, t_max)
        zs = _normal_line_point(orbit, "stable", q, d, n, t_max)
        h = lambda z: 0.5 * z[1] ** 2 + 1.0 - math.cos(z[0])
        return h(zs) - h(zu)

    g = gap(delta)
    if not refine:
        return g
    floor = 1e-12
    for _ in range(6):
        delta *= 0.5
        g2 = gap(delta)
        if abs(g2 - g) <= 1e-3 * max(abs(g2), floor):
            return g2
        g = g2
    return g


def first_order_gap(tau, sigma: float, a: float | None = None):
    """Leading term of :func:`manifold_distance`.

    Along the flow dH1/dt = -mu1 eta2 sin(xi1); integrating over the two
    half-lines from the normal line gives H1(z^s) - H1(z^u) = -sigma M(tau) + O(sigma^2).
    """
    a = find_a0() if a is None else a
    return -sigma * melnikov(tau, a)


@dataclass
class TransversalityCertificate:
    sigma: float
    tau_star: float
    bracket: tuple[float, float]
    gap_slope: float
    melnikov_slope: float
    slope_ratio: float            # gap slope over the derived first-order slope -sigma M'(0)
    literal_slope_ratio: float    # gap slope over +sigma M'(0)
    taus: list[float]
    gaps: list[float]
    first_order: list[float]

    def to_dict(self) -> dict:
        return asdict(self)


def transversality_check(sigma: float, orbit: PeriodicOrbitSigma | None = None,
                         bracket: tuple[float, float] = (-0.25, 0.25), h: float = 0.05,
                         taus=(-1.0, -0.5, 0.5, 1.0)) -> TransversalityCertificate:
    """Bracket and refine the zero of the manifold gap near tau = 0 and compare its
    slope with the Melnikov prediction."""
    orbit = orbit if orbit is not None else continue_periodic_orbit(sigma)
    gap = lambda t: manifold_distance(t, sigma, orbit)
    lo, hi = bracket
    glo, ghi = gap(lo), gap(hi)
    if glo * ghi > 0:
        raise RuntimeError(f"no sign change of the manifold gap on [{lo}, {hi}]")
    tau_star = optimize.brentq(gap, lo, hi, xtol=1e-10)
    slope = (gap(tau_star + h) - gap(tau_star - h)) / (2.0 * h)
    m1 = melnikov_slope0(orbit.a)
    gaps = [gap(t) for t in taus]
    return TransversalityCertificate(
        sigma=float(sigma), tau_star=float(tau_star), bracket=(float(lo), float(hi)),
        gap_slope=float(slope), melnikov_slope=float(m1),
        slope_ratio=float(slope / (-sigma * m1)), literal_slope_ratio=float(slope / (sigma * m1)),
        taus=[float(t) for t in taus], gaps=[float(g) for g in gaps],
        first_order=[float(first_order_gap(t, sigma, orbit.a)) for t in taus])


def discrepancy_exponent(sigmas=(0.02, 0.035, 0.05), taus=(-1.0, -0.5, 0.5, 1.0)) -> tuple[float, list[float]]:
    """Log-log slope of max_tau |gap - first-order term| against sigma."""
    errs = []
    for s in sigmas:
        orbit = continue_periodic_orbit(s)
        errs.append(max(abs(manifold_distance(t, s, orbit) - first_order_gap(t, s, orbit.a)) for t in taus))
    slope = np.polyfit(np.log(sigmas), np.log(errs), 1)[0]
    return float(slope), [float(e) for e in errs]


# ---------------------------------------------------------------- itinerary targeting

@dataclass(frozen=True)
class SectionCurve:
    """Periodic cubic spline through samples of the unstable branch on the section,
    in (xi1, eta1) as a function of the seeding phase, lifted to the energy level."""

    spline: CubicSpline
    level: float
    sigma: float

    def point(self, s: float) -> SectionPoint:
        xi1, eta1 = self.spline(s)
        return SectionPoint(float(xi1), float(eta1), section_eta2(xi1, eta1, self.level, self.sigma))


@dataclass
class Itinerary:
    sigma: float
    a0: float
    T: float
    M0: int
    prescribed: list[int]
    realized: list[int] = field(default_factory=list)
    section_times: list[float] = field(default_factory=list)
    t_j: list[float] = field(default_factory=list)
    t_bar_j: list[float] = field(default_factory=list)
    theta_j: list[float] = field(default_factory=list)
    start: list[float] = field(default_factory=list)
    windows: list[float] = field(default_factory=list)
    eta2_band_constant: float = math.nan
    shadow_distance: float = math.nan
    # time of the first upward eta2 = 1 crossing, measured from ``start``
    t_start: float = math.nan

    @property
    def matches(self) -> bool:
        return self.realized[: len(self.prescribed)] == list(self.prescribed)

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "a0": self.a0, "M0": self.M0,
                "symbols_prescribed": list(self.prescribed), "symbols_realized": list(self.realized),
                "t_j": list(self.t_j), "theta_j": list(self.theta_j),
                "T": self.T, "t_bar_j": list(self.t_bar_j), "section_times": list(self.section_times),
                "start": list(self.start), "windows": list(self.windows),
                "eta2_band_constant": self.eta2_band_constant, "shadow_distance": self.shadow_distance,
                "t_start": self.t_start}

    def write_json(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


COLLAPSE = 1e-14


class _Stage:
    """Return data of points of the search curve: the first ``k`` crossings of xi2 through 2 pi Z."""

    def __init__(self, path: SectionCurve, k: int, t_max: float):
        self.path, self.k, self.t_max = path, k, t_max

    def __call__(self, s: float) -> tuple[int, float, list[float]]:
        """(side of the k-th crossing, its delay after the (k-1)-th, section times)."""
        p = crossings(self.path.point(s).state(), self.path.sigma, self.k, self.t_max)
        signs = p.signs
        if p.times.size < self.k:
            return 0, math.inf, list(p.times)
        if np.any(signs[:-1] < 0):
            return -2, math.inf, list(p.times)
        prev = p.times[-2] if self.k > 1 else 0.0
        return int(signs[-1]), float(p.times[-1] - prev), list(p.times)


def _bisect(pred, good: float, bad: float, iters: int = 200) -> tuple[float, float]:
    """Shrink [good, bad] (pred(good) true, pred(bad) false) until the midpoint is not representable."""
    for _ in range(iters):
        mid = 0.5 * (good + bad)
        if mid == good or mid == bad:
            break
        if pred(mid):
            good = mid
        else:
            bad = mid
    return good, bad


def _stage_window(stage: _Stage, lo: float, hi: float, m: int, T: float, n: int):
    """Subinterval of [lo, hi] whose k-th return symbol equals m, next to a stable-manifold crossing.

    Among the candidate crossings the one whose window is widest is kept.
    """
    ss = np.linspace(lo, hi, n + 1)
    data = [stage(s) for s in ss]
    sides = np.array([d[0] for d in data])
    delays = np.array([d[1] for d in data])
    best = None
    for i in range(n):
        for up, dn in ((i, i + 1), (i + 1, i)):
            if sides[up] != 1 or sides[dn] == 1 or sides[dn] == -2:
                continue
            # walk away from the crossing to a point that returns before symbol m starts
            step = -1 if dn > up else 1
            far = up
            while 0 <= far < len(ss) and sides[far] == 1 and delays[far] >= m * T:
                far += step
            if not (0 <= far < len(ss)) or sides[far] != 1:
                continue
            edge = []
            for level in (m * T, (m + 1) * T):
                pred = lambda s, L=level: (lambda d: d[0] == 1 and d[1] < L)(stage(s))
                good, _ = _bisect(pred, ss[far], ss[dn])
                edge.append(good)
            width = abs(edge[1] - edge[0])
            if best is None or width > best[2]:
                best = (min(edge), max(edge), width, ss[far], ss[dn])
    return best


def target_itinerary(m_seq, sigma: float, orbit: PeriodicOrbitSigma | None = None, *, n_curve: int = 400,
                     n_scan: int = 64, M0: int | None = None) -> Itinerary:
    """Point of the section whose successive return symbols are ``m_seq``.

    The search runs along a spline through the section points of the unstable
    branch, starting from a stretch where the exit side flips (a crossing of
    the stable manifold). For each prescribed symbol the
    current window is scanned for the next such crossing and narrowed, by
    bisection, to the points whose return time lies in [m T, (m+1) T). The final
    point is taken where the last return time equals (m + 1/2) T and the whole
    itinerary is checked by a direct integration.
    """
    m_seq = [int(m) for m in m_seq]
    orbit = orbit if orbit is not None else continue_periodic_orbit(sigma)
    T = orbit.T
    if M0 is None:
        M0, _ = measure_M0(orbit, n_curve)
    if min(m_seq) < M0:
        raise ValueError(f"symbols must be at least M0 = {M0}")

    thetas, curve = unstable_section_curve(orbit, n_curve)
    if not np.all(np.isfinite(curve)):
        raise TargetingError("part of the unstable branch does not reach the section", [])
    sides = []
    for y in curve:
        y = y.copy()
        y[2] = 0.0
        sides.append(exit_side(y, sigma)[0])
    flips = [i for i in range(n_curve) if sides[i] != sides[(i + 1) % n_curve]]
    if len(flips) < 2:
        raise TargetingError("the unstable branch never crosses the stable one on the section", [])
    knots = np.append(thetas, T)
    values = np.vstack([curve[:, :2], curve[:1, :2]])
    values[:, 0] = thetas[0] * 0 + np.unwrap(values[:, 0])
    if abs(values[-1, 0] - values[0, 0]) > 1e-12:
        raise TargetingError("the unstable branch winds around the section", [])
    path = SectionCurve(CubicSpline(knots, values, bc_type="periodic"), orbit.energy, sigma)
    # first search range: an upward run together with its two bounding crossings
    i0 = next(i for i in flips if sides[(i + 1) % n_curve] == 1)
    i1 = next(i for i in flips[flips.index(i0) + 1:] + flips[:flips.index(i0) + 1] if sides[i] == 1)
    lo, hi = thetas[i0], thetas[i1] + (T if i1 < i0 else 0.0) + T / n_curve
    windows, achieved = [], []
    t_budget = (sum(m_seq) + 2 * len(m_seq) + 4) * T + 100.0
    for k, m in enumerate(m_seq, start=1):
        stage = _Stage(path, k, t_budget)
        win = _stage_window(stage, lo, hi, m, T, n_scan)
        if win is None:
            raise TargetingError(f"no window for symbol {m} at stage {k}", achieved)
        if win[2] <= COLLAPSE * max(1.0, abs(win[0])):
            raise TargetingError(f"window for symbol {m} collapsed to {win[2]:.1e}", achieved)
        lo, hi = win[0], win[1]
        windows.append(float(hi - lo))
        achieved.append(m)

    stage = _Stage(path, len(m_seq), t_budget)
    target = (m_seq[-1] + 0.5) * T
    pred = lambda s: (lambda d: d[0] == 1 and d[1] < target)(stage(s))
    # orient [far, near] so that the predicate holds at the first end
    ends = (lo, hi) if pred(lo) else (hi, lo)
    s_star, _ = _bisect(pred, *ends)

    start = path.point(s_star)
    itin = Itinerary(sigma=float(sigma), a0=orbit.a, T=T, M0=int(M0), prescribed=m_seq,
                     start=[start.xi1, start.eta1, 0.0, start.eta2], windows=windows)
    return describe_orbit(itin, orbit)


def describe_orbit(itin: Itinerary, orbit: PeriodicOrbitSigma) -> Itinerary:
    """Realized symbols, eta2 = 1 crossing times and the eta2 bounds of the orbit from ``itin.start``."""
    sigma, T, n = itin.sigma, itin.T, len(itin.prescribed)
    y0 = np.asarray(itin.start, dtype=float)
    t_budget = (sum(itin.prescribed) + 2 * n + 4) * T + 100.0
    # one continuous forward integration carries every measured quantity: restarting
    # from an event state would move the orbit off its narrow window
    lattice = crossings(y0, sigma, n, t_budget)
    up = lattice.signs > 0
    stop = int(np.argmin(up)) if not up.all() else len(up)
    hits = np.concatenate([[0.0], lattice.times[:stop]])
    itin.realized = [int(s) for s in extract_symbols(hits, T)]

    back = flow(y0, -3.0 * T, sigma, events=[ode.Crossing(3, 1.0, 0.0, 1, 1)])
    if not back.event_t[0].size:
        raise RuntimeError("no upward eta2 = 1 crossing before the starting point")
    t_start = float(back.event_t[0][0])
    itin.t_start = t_start
    t_stop = hits[-1] + 0.5
    grid = np.arange(0.0, t_stop, 0.005)
    fwd = flow(y0, t_stop, sigma, t_eval=grid,
               events=[ode.Crossing(3, 1.0, 0.0, 1), ode.Crossing(3, 1.0, 0.0, -1)])
    ups = np.concatenate([[t_start], fwd.event_t[0]])
    downs = fwd.event_t[1]
    itin.section_times = [float(h - t_start) for h in hits]
    itin.t_j = [float(u - t_start) for u in ups]
    itin.t_bar_j = [float(d - t_start) for d in downs]
    itin.theta_j = [float((ups[j + 1] - ups[j]) / T - itin.realized[j])
                    for j in range(min(len(ups) - 1, len(itin.realized)))]

    # the stretch before t = 0 comes from the backward run
    pre = flow(y0, t_start, sigma, t_eval=np.arange(0.0, t_start, -0.005))
    times = np.concatenate([pre.t[::-1], fwd.t])
    states = np.vstack([pre.y[::-1], fwd.y])
    eta2 = states[:, 3]
    c = 0.0
    for j in range(min(len(ups) - 1, len(downs))):
        inside = (times > ups[j]) & (times < downs[j])
        outside = (times > downs[j]) & (times < ups[j + 1])
        if inside.any():
            c = max(c, abs(2.0 - eta2[inside].max()) / sigma)
        if outside.any():
            c = max(c, abs(eta2[outside].min()) / sigma)
    itin.eta2_band_constant = float(c)

    # (xi1, eta1) against the unperturbed libration, with the phase of the periodic orbit
    xs, es = states[:, 0], states[:, 1]
    pend = pendulum_orbit(orbit.a)
    phase = _fit_phase(times, xs, pend)
    ref_x, ref_e = pend(times + phase)
    itin.shadow_distance = float(max(np.max(np.abs(_wrap(xs - ref_x))), np.max(np.abs(es - ref_e))))
    return itin


def itinerary_samples(itin: Itinerary, s) -> np.ndarray:
    """States of the targeted orbit at times ``s`` counted from its first upward eta2 = 1 crossing.

    Uses the same two integrations from ``itin.start`` (forward, and backward for
    times before it) that produced the realized symbols.
    """
    s = np.asarray(s, dtype=float)
    tau = s + itin.t_start
    y0 = np.asarray(itin.start, dtype=float)
    out = np.empty((s.size, 4))
    before = tau < 0.0
    if before.any():
        tb = tau[before]
        order = np.argsort(-tb)
        sol = flow(y0, float(tb.min()), itin.sigma, t_eval=tb[order])
        out[np.nonzero(before)[0][order]] = sol.y
    if (~before).any():
        ta = tau[~before]
        order = np.argsort(ta)
        sol = flow(y0, float(ta.max()), itin.sigma, t_eval=ta[order])
        out[np.nonzero(~before)[0][order]] = sol.y
    return out


def _fit_phase(t, xi, pend) -> float:
    grid = np.linspace(0.0, pend.T, 401)
    cost = [np.max(np.abs(_wrap(xi - pend.xi(t + g)))) for g in grid]
    g0 = grid[int(np.argmin(cost))]
    res = optimize.minimize_scalar(lambda g: np.max(np.abs(_wrap(xi - pend.xi(t + g)))),
                                   bounds=(g0 - pend.T / 400, g0 + pend.T / 400), method="bounded")
    return float(res.x)
