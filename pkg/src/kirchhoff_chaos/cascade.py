"""Truncated effective system and its chain of charts.

    State6 (S1..S4, phi123, phi234)
      -> State4 (S3, S4, phi123, phi234)        eliminate the first integrals E1, E2
      -> StateXY (x1, x2, y1, y2)               Hamiltonian form
      -> StateTilde                            y translated by q = A^{-1} b
      -> StateXiEta (xi1, eta1, xi2, eta2)      rescaled pendulum coordinates

All maps act row-wise on arrays of shape (4,) / (6,) or (n, 4) / (n, 6).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _fields, ode
from .resonant import TripletConfig, scaled_couplings
from .trajectory import Trajectory

CHARTS = {
    "six": ("S1", "S2", "S3", "S4", "phi123", "phi234"),
    "four": ("S3", "S4", "phi123", "phi234"),
    "xy": ("x1", "x2", "y1", "y2"),
    "tilde": ("x1", "x2", "y1", "y2"),
    "xieta": ("xi1", "eta1", "xi2", "eta2"),
}


@dataclass(frozen=True)
class EffConstants:
    config: TripletConfig
    c123: float
    c234: float
    rho123: float
    rho234: float
    E1: float
    E2: float
    b1: float
    b2: float
    q1: float
    q2: float
    A1: float
    A2: float
    B: float
    lam: float

    @property
    def mu1(self) -> float:
        return self.config.mu1

    @property
    def mu2(self) -> float:
        return self.config.mu2

    @property
    def gamma(self) -> float:
        return self.config.gamma

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("c123", "c234", "rho123", "rho234", "E1", "E2", "b1", "b2",
                                             "q1", "q2", "A1", "A2", "B", "lam")}
        out.update(mu1=self.mu1, mu2=self.mu2, gamma=self.gamma)
        return out


def _rho_from_c(config: TripletConfig, c123: float, c234: float) -> tuple[float, float]:
    a1, a2, a3, a4 = config.alphas
    return c123 / (0.375 * a1 * a2 * a3), c234 / (0.375 * a2 * a3 * a4)


def _rescaling(config: TripletConfig, c123: float) -> tuple[float, float, float]:
    if not c123 > 0:
        raise ValueError("rescaling needs c123 > 0")
    B = math.sqrt(config.sum123 * c123 / 2.0)
    A1 = math.sqrt(2.0 * c123 / config.sum123)
    A2 = 2.0 * B / config.sum234
    return A1, A2, B


def b_from_E(config: TripletConfig, E1: float, E2: float) -> tuple[float, float]:
    a1, a2, _, _ = config.alphas
    return a1 * a1 * E1 + a2 * a2 * E2, a2 * a2 * E2


def E_from_b(config: TripletConfig, b1: float, b2: float) -> tuple[float, float]:
    a1, a2, _, _ = config.alphas
    return (b1 - b2) / (a1 * a1), b2 / (a2 * a2)


def q_from_b(config: TripletConfig, b1: float, b2: float) -> tuple[float, float]:
    (a11, a12), (_, a22) = config.A
    det = config.detA
    return (a22 * b1 - a12 * b2) / det, (-a12 * b1 + a11 * b2) / det


def b_from_q(config: TripletConfig, q1: float, q2: float) -> tuple[float, float]:
    (a11, a12), (_, a22) = config.A
    return a11 * q1 + a12 * q2, a12 * q1 + a22 * q2


def from_couplings(config: TripletConfig, c123: float, c234: float, E1: float, E2: float) -> EffConstants:
    """Constants of the whole chain from the couplings and the first integrals."""
    b1, b2 = b_from_E(config, E1, E2)
    q1, q2 = q_from_b(config, b1, b2)
    A1, A2, B = _rescaling(config, c123)
    r123, r234 = _rho_from_c(config, c123, c234)
    lam = c234 * config.gamma / c123
    return EffConstants(config, c123, c234, r123, r234, E1, E2, b1, b2, q1, q2, A1, A2, B, lam)


def from_amplitudes(config: TripletConfig, A1: float, q1: float, q2: float, lam: float = 1.0) -> EffConstants:
    """Constants fixed by the rescaling amplitude A1 and the translation q."""
    c123 = A1 * A1 * config.sum123 / 2.0
    c234 = lam * c123 / config.gamma
    b1, b2 = b_from_q(config, q1, q2)
    E1, E2 = E_from_b(config, b1, b2)
    return from_couplings(config, c123, c234, E1, E2)


def from_state6(config: TripletConfig, state6, rho123: float, rho234: float) -> EffConstants:
    s = np.asarray(state6, dtype=float)
    a1, a2, a3, a4 = config.alphas
    c123 = 0.375 * rho123 * a1 * a2 * a3
    c234 = 0.375 * rho234 * a2 * a3 * a4
    E1, E2 = first_integrals(s)
    return from_couplings(config, c123, c234, float(E1), float(E2))


def with_lambda(consts: EffConstants, lam: float) -> EffConstants:
    c234 = lam * consts.c123 / consts.gamma
    return replace(consts, c234=c234, rho234=_rho_from_c(consts.config, consts.c123, c234)[1], lam=lam)


# ---------------------------------------------------------------- vector fields

def _alpha_sq(config: TripletConfig) -> list[float]:
    return [float(a * a) for a in config.alphas]


def params6(consts: EffConstants) -> np.ndarray:
    return np.array([consts.c123, consts.c234, *_alpha_sq(consts.config)])


def params4(consts: EffConstants) -> np.ndarray:
    return np.array([consts.c123, consts.c234, consts.E1, consts.E2, *_alpha_sq(consts.config)])


def params_xy(consts: EffConstants, translated: bool = False) -> np.ndarray:
    (a11, a12), (_, a22) = consts.config.A
    b1, b2 = (0.0, 0.0) if translated else (consts.b1, consts.b2)
    return np.array([consts.c123, consts.c234, b1, b2, a11, a12, a22], dtype=float)


def params_xieta(mu1: float, mu2: float, lam: float = 1.0) -> np.ndarray:
    return np.array([mu1, mu2, lam], dtype=float)


def _call(fun, y, p) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    fun(0.0, y, p, out)
    return out


def _rowwise(fun, Y, p) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        return _call(fun, Y, p)
    return np.array([_call(fun, row, p) for row in Y])


def rhs6(state, consts: EffConstants) -> np.ndarray:
    return _rowwise(_fields.six, state, params6(consts))


def rhs_sz(state, config: TripletConfig) -> np.ndarray:
    """Complex form: y = (S1..S4, Re Z123, Im Z123, Re Z234, Im Z234)."""
    return _rowwise(_fields.sz, state, np.asarray(config.alphas, dtype=float))


def rhs4(state, consts: EffConstants) -> np.ndarray:
    return _rowwise(_fields.four, state, params4(consts))


def rhs_xy(state, consts: EffConstants) -> np.ndarray:
    return _rowwise(_fields.xy, state, params_xy(consts))


def rhs_tilde(state, consts: EffConstants) -> np.ndarray:
    return _rowwise(_fields.xy, state, params_xy(consts, translated=True))


def rhs_xieta(state, mu1: float, mu2: float, lam: float = 1.0) -> np.ndarray:
    return _rowwise(_fields.xieta, state, params_xieta(mu1, mu2, lam))


# ---------------------------------------------------------------- conserved quantities

def first_integrals(state6) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(state6, dtype=float)
    return s[..., 0] + s[..., 2] + s[..., 3], s[..., 1] + s[..., 2] + 2.0 * s[..., 3]


def weighted_action(state6, config: TripletConfig) -> np.ndarray:
    """sum a_n S_n."""
    s = np.asarray(state6, dtype=float)
    return s[..., :4] @ np.asarray(config.alphas, dtype=float)


def hamiltonian_xy(state, consts: EffConstants, translated: bool = False) -> np.ndarray:
    s = np.asarray(state, dtype=float)
    x1, x2, y1, y2 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    (a11, a12), (_, a22) = consts.config.A
    b1, b2 = (0.0, 0.0) if translated else (consts.b1, consts.b2)
    quad = a11 * y1 * y1 + 2 * a12 * y1 * y2 + a22 * y2 * y2
    return -consts.c123 * np.cos(x1) - consts.c234 * np.cos(x2) - 0.5 * (b1 * y1 + b2 * y2) + 0.25 * quad


def pendulum_energy(xi, eta, lam: float = 1.0):
    return 0.5 * np.asarray(eta) ** 2 + lam * (1.0 - np.cos(xi))


def coupled_energy(state, sigma: float, lam: float = 1.0) -> np.ndarray:
    """Conserved quantity of the pendulum system divided by sigma.

    Equals (mu2 H1 + mu1 H2 - mu1 mu2 eta1 eta2)/sigma, finite at sigma = 0.
    """
    s = np.asarray(state, dtype=float)
    k1, k2 = scaled_couplings(sigma)
    h1 = pendulum_energy(s[..., 0], s[..., 1])
    h2 = pendulum_energy(s[..., 2], s[..., 3], lam)
    return k2 * h1 + k1 * h2 - sigma * k1 * k2 * s[..., 1] * s[..., 3]


# ---------------------------------------------------------------- chart maps

def reduce6to4(state6) -> np.ndarray:
    s = np.asarray(state6, dtype=float)
    return s[..., 2:].copy()


def lift4to6(state4, consts: EffConstants) -> np.ndarray:
    s = np.asarray(state4, dtype=float)
    s3, s4 = s[..., 0], s[..., 1]
    s1 = consts.E1 - s3 - s4
    s2 = consts.E2 - s3 - 2.0 * s4
    return np.stack([s1, s2, s3, s4, s[..., 2], s[..., 3]], axis=-1)


def map4toXY(state4) -> np.ndarray:
    s = np.asarray(state4, dtype=float)
    return np.stack([s[..., 2], s[..., 3], s[..., 0] + s[..., 1], s[..., 1]], axis=-1)


def mapXYto4(state_xy) -> np.ndarray:
    s = np.asarray(state_xy, dtype=float)
    return np.stack([s[..., 2] - s[..., 3], s[..., 3], s[..., 0], s[..., 1]], axis=-1)


def translate(state_xy, consts: EffConstants) -> np.ndarray:
    s = np.array(state_xy, dtype=float)
    s[..., 2] -= consts.q1
    s[..., 3] -= consts.q2
    return s


def untranslate(state_tilde, consts: EffConstants) -> np.ndarray:
    s = np.array(state_tilde, dtype=float)
    s[..., 2] += consts.q1
    s[..., 3] += consts.q2
    return s


def rescale(state_tilde, consts: EffConstants) -> np.ndarray:
    """(x~, y~) -> (xi1, eta1, xi2, eta2); times map as s = B t."""
    s = np.asarray(state_tilde, dtype=float)
    return np.stack([s[..., 0], s[..., 2] / consts.A1, s[..., 1], s[..., 3] / consts.A2], axis=-1)


def unrescale(state_xieta, consts: EffConstants) -> np.ndarray:
    s = np.asarray(state_xieta, dtype=float)
    return np.stack([s[..., 0], s[..., 2], s[..., 1] * consts.A1, s[..., 3] * consts.A2], axis=-1)


def six_to_xieta(state6, consts: EffConstants) -> np.ndarray:
    return rescale(translate(map4toXY(reduce6to4(state6)), consts), consts)


def xieta_to_six(state_xieta, consts: EffConstants) -> np.ndarray:
    return lift4to6(mapXYto4(untranslate(unrescale(state_xieta, consts), consts)), consts)


# ---------------------------------------------------------------- integration

def _trajectory(kind, params, y0, t_span, t_eval, tol, chart, meta=None, events=()) -> Trajectory:
    if t_eval is None:
        t_eval = np.linspace(t_span[0], t_span[1], 1001)
    sol = ode.solve(kind, params, y0, t_span, rtol=tol, t_eval=t_eval, events=events)
    tr = Trajectory(sol.t, sol.y, chart, CHARTS[chart], sol.stats(), dict(meta or {}))
    tr.meta["solution"] = sol
    return tr


def integrate6(state6, consts: EffConstants, t_end: float, tol: float = 1e-11, t_eval=None,
               t0: float = 0.0, positivity_floor: float = 0.0) -> Trajectory:
    """Integrate the six-equation system; records the first sampled time with S_n <= floor."""
    tr = _trajectory(_fields.SIX, params6(consts), state6, (t0, t_end), t_eval, tol, "six")
    bad = np.nonzero(np.any(tr.states[:, :4] <= positivity_floor, axis=1))[0]
    tr.meta["first_nonpositive_time"] = float(tr.t[bad[0]]) if bad.size else None
    return tr


def six_to_sz(state6, consts: EffConstants) -> np.ndarray:
    s = np.asarray(state6, dtype=float)
    z1 = consts.rho123 * np.exp(1j * s[..., 4])
    z2 = consts.rho234 * np.exp(1j * s[..., 5])
    return np.concatenate([s[..., :4], np.stack([z1.real, z1.imag, z2.real, z2.imag], axis=-1)], axis=-1)


def integrate_sz(state, config: TripletConfig, t_end: float, tol: float = 1e-11, t_eval=None) -> Trajectory:
    """Truncated system with the triple products kept as complex unknowns.

    The products are many orders below the superactions, so each block gets an
    absolute tolerance scaled to its own initial size.
    """
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, 1001)
    y = np.asarray(state, dtype=float)
    scale = [np.max(np.abs(y[:4])), np.hypot(y[4], y[5]), np.hypot(y[6], y[7])]
    scale = [v if v > 0 else 1.0 for v in scale]
    atol = tol * np.repeat(scale, [4, 2, 2])
    sol = ode.solve(_fields.SZ, np.asarray(config.alphas, dtype=float), y, (0.0, t_end), rtol=tol,
                    atol=atol, t_eval=t_eval)
    cols = ("S1", "S2", "S3", "S4", "reZ123", "imZ123", "reZ234", "imZ234")
    return Trajectory(sol.t, sol.y, "sz", cols, sol.stats(), {"solution": sol})


def integrate4(state4, consts: EffConstants, t_end: float, tol: float = 1e-11, t_eval=None) -> Trajectory:
    return _trajectory(_fields.FOUR, params4(consts), state4, (0.0, t_end), t_eval, tol, "four")


def integrate_xy(state, consts: EffConstants, t_end: float, tol: float = 1e-11, t_eval=None,
                 translated: bool = False) -> Trajectory:
    return _trajectory(_fields.XY, params_xy(consts, translated), state, (0.0, t_end), t_eval, tol,
                       "tilde" if translated else "xy")


def integrate_xieta(state, mu1: float, mu2: float, t_end: float, tol: float = 1e-11, t_eval=None,
                    lam: float = 1.0, t0: float = 0.0, events=()) -> Trajectory:
    return _trajectory(_fields.XIETA, params_xieta(mu1, mu2, lam), state, (t0, t_end), t_eval, tol,
                       "xieta", events=events)


def compose_chain(traj: Trajectory, consts: EffConstants) -> Trajectory:
    """(xi, eta) samples at rescaled times s -> State6 samples at times t = s/B."""
    states = xieta_to_six(traj.states, consts)
    return Trajectory(traj.t / consts.B, states, "six", CHARTS["six"], dict(traj.stats),
                      {"source": traj.chart})


@dataclass(frozen=True)
class ScaledForm:
    """S_n = eps^2 s_n +/- eps^3 (a1 eta1, a2 eta2 combinations); times scale with b eps^3."""

    s: tuple[float, float, float, float]
    a1: float
    a2: float
    b: float


def scaled_form(consts: EffConstants, eps: float) -> ScaledForm:
    e2, e3 = eps**2, eps**3
    s = ((consts.E1 - consts.q1) / e2, (consts.E2 - consts.q1 - consts.q2) / e2,
         (consts.q1 - consts.q2) / e2, consts.q2 / e2)
    return ScaledForm(s, consts.A1 / e3, consts.A2 / e3, consts.B / e3)


# ---------------------------------------------------------------- residual oracle

_FD8 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])


def fd_residual(t: np.ndarray, states: np.ndarray, rhs) -> float:
    """Sup-norm mismatch between an eighth-order central difference of uniformly
    sampled states and ``rhs(states)``, relative to the sup of ``rhs``."""
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h, rtol=1e-9, atol=0):
        raise ValueError("uniform sampling required")
    deriv = sum(c * states[i:len(states) - 8 + i] for i, c in enumerate(_FD8)) / h
    target = rhs(states[4:-4])
    return float(np.max(np.abs(deriv - target)) / np.max(np.abs(target)))
