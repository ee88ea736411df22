"""Kirchhoff equation restricted to the two-triplet Fourier support, and the
quintic resonant model used as an oracle for the superaction dynamics.

Because the nonlinearity of the Kirchhoff equation is the scalar
G = w * sum |k|^2 |u_k|^2, the Fourier support is exactly invariant and the flow
reduces to four coupled oscillators (sixteen real unknowns after using the
reality constraint).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _fields, ode
from .resonant import (
    CONJUGATE_PAIR,
    PHYSICAL,
    SpectralField,
    TripletConfig,
    calN_arrays,
    enumerate_triplets,
    sphere_sums,
    triple_products,
)
from .trajectory import Trajectory, write_csv

SERIES_COLUMNS = ("S1", "S2", "S3", "S4", "phi123", "phi234", "rho123", "rho234", "N1", "calN", "energy")


@dataclass(frozen=True)
class PhysicalState:
    u: SpectralField
    v: SpectralField
    t: float = 0.0

    def __post_init__(self):
        if self.u.flavor != PHYSICAL or self.v.flavor != PHYSICAL:
            raise ValueError("PhysicalState needs physical fields")
        if self.u.support != self.v.support:
            raise ValueError("u and v must share their support")

    @property
    def support(self) -> tuple[int, ...]:
        return self.u.support


@dataclass(frozen=True)
class ResonantState:
    u: SpectralField
    t: float = 0.0

    def __post_init__(self):
        if self.u.flavor != CONJUGATE_PAIR:
            raise ValueError("ResonantState needs a conjugate-pair field")

    @property
    def v(self) -> SpectralField:
        return self.u.conjugate()


# ---------------------------------------------------------------- packing

def pack_physical(state: PhysicalState) -> np.ndarray:
    n = len(state.support) // 2
    u, v = state.u.coeffs[:n], state.v.coeffs[:n]
    return np.concatenate([u.real, u.imag, v.real, v.imag])


def unpack_physical(y: np.ndarray, support, t: float = 0.0) -> PhysicalState:
    u, v = unpack_arrays(np.asarray(y)[None, :])
    return PhysicalState(SpectralField(support, u[0], PHYSICAL), SpectralField(support, v[0], PHYSICAL), t)


def unpack_arrays(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows of packed states -> full signed-support coefficient arrays (u, v)."""
    n = Y.shape[1] // 4
    up = Y[:, :n] + 1j * Y[:, n:2 * n]
    vp = Y[:, 2 * n:3 * n] + 1j * Y[:, 3 * n:]
    return np.concatenate([up, np.conj(up)], axis=1), np.concatenate([vp, np.conj(vp)], axis=1)


def _kirchhoff_params(support, weight: float, linearize: bool) -> np.ndarray:
    n = len(support) // 2
    return np.concatenate([[float(weight), 1.0 if linearize else 0.0], np.abs(support[:n])]).astype(float)


# ---------------------------------------------------------------- Kirchhoff

def g_value(state: PhysicalState, weight: float = 1.0) -> float:
    k = state.u.freqs
    return float(weight * np.sum(k**2 * np.abs(state.u.coeffs) ** 2))


def kirchhoff_rhs(state: PhysicalState, weight: float = 1.0, linearize: bool = False
                  ) -> tuple[SpectralField, SpectralField]:
    """(du/dt, dv/dt) = (v, -(1+G)|k|^2 u)."""
    g = 0.0 if linearize else g_value(state, weight)
    k2 = state.u.freqs ** 2
    dv = -(1.0 + g) * k2 * state.u.coeffs
    return (SpectralField(state.support, state.v.coeffs, PHYSICAL),
            SpectralField(state.support, dv, PHYSICAL))


def kirchhoff_energy(state: PhysicalState, weight: float = 1.0) -> float:
    """1/2 sum|v_k|^2 + 1/2 sum|k|^2|u_k|^2 + (w/4)(sum|k|^2|u_k|^2)^2 (w = 1: unit measure)."""
    k2 = state.u.freqs ** 2
    grad = float(np.sum(k2 * np.abs(state.u.coeffs) ** 2))
    return 0.5 * float(np.sum(np.abs(state.v.coeffs) ** 2)) + 0.5 * grad + 0.25 * weight * grad**2


def energy_arrays(u: np.ndarray, v: np.ndarray, k: np.ndarray, weight: float = 1.0) -> np.ndarray:
    grad = np.sum(k**2 * np.abs(u) ** 2, axis=-1)
    return 0.5 * np.sum(np.abs(v) ** 2, axis=-1) + 0.5 * grad + 0.25 * weight * grad**2


@dataclass
class KirchhoffRun:
    """Samples of an exact run: full coefficient arrays plus derived series."""

    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    support: tuple[int, ...]
    weight: float
    solution: ode.Solution

    @property
    def stats(self) -> dict:
        return self.solution.stats()

    def final_state(self) -> PhysicalState:
        return unpack_physical(self.solution.y_final, self.support, self.solution.t_final)

    def normal_form_coeffs(self) -> np.ndarray:
        """f = (|D|^{1/2} u + i |D|^{-1/2} v)/sqrt2 per sample (inverse of the linear maps)."""
        k = np.sqrt(np.abs(np.asarray(self.support, dtype=float)))
        return (self.u * k + 1j * self.v / k) / np.sqrt(2.0)

    def series(self) -> dict[str, np.ndarray]:
        k = np.asarray(self.support, dtype=float)
        out = observable_series(self.normal_form_coeffs(), self.support)
        out["calN"] = calN_arrays(self.u, self.v, k)
        out["energy"] = energy_arrays(self.u, self.v, k, self.weight)
        return out

    def to_trajectory(self) -> Trajectory:
        s = self.series()
        table = np.column_stack([s[c] for c in SERIES_COLUMNS])
        return Trajectory(self.t, table, "kirchhoff-observables", SERIES_COLUMNS, self.stats,
                          {"support": list(self.support), "weight": self.weight})


def observable_series(f: np.ndarray, support) -> dict[str, np.ndarray]:
    """Superactions, triple products and polar parts along rows of coefficients."""
    f = np.atleast_2d(f)
    S, B = sphere_sums(f)
    z123, z234 = triple_products(B)
    al = np.abs(np.asarray(support[:4], dtype=float))
    return {
        "S1": S[:, 0], "S2": S[:, 1], "S3": S[:, 2], "S4": S[:, 3],
        "phi123": np.unwrap(np.angle(z123)), "phi234": np.unwrap(np.angle(z234)),
        "rho123": np.abs(z123), "rho234": np.abs(z234),
        "N1": S @ al**2,
        "calN": np.sqrt(2.0 * (S @ al**2)),
        "energy": np.full(len(S), np.nan),
    }


def integrate_kirchhoff(init: PhysicalState, t_end: float, tol: float = 1e-11,
                        sample_times=None, *, weight: float = 1.0, linearize: bool = False,
                        atol: float | None = None, max_step: float = np.inf) -> KirchhoffRun:
    """Integrate the restricted Kirchhoff ODE from ``init.t`` to ``t_end``.

    Samples are taken on ``sample_times`` (default: 1001 uniform points). A
    step-size underflow is reported in ``run.solution.status`` with the last
    valid state in ``run.solution.y_final``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y0 = pack_physical(init)
    if sample_times is None:
        sample_times = np.linspace(init.t, t_end, 1001)
    sol = ode.solve(_fields.KIRCHHOFF, _kirchhoff_params(init.support, weight, linearize), y0,
                    (init.t, t_end), rtol=tol, atol=atol, t_eval=sample_times, max_step=max_step)
    u, v = unpack_arrays(sol.y) if len(sol.t) else (np.empty((0, len(init.support))),) * 2
    return KirchhoffRun(sol.t, u, v, init.support, weight, sol)


def linear_wave(init: PhysicalState, t) -> PhysicalState:
    """Closed-form solution with G forced to zero."""
    k = np.abs(init.u.freqs)
    c, s = np.cos(k * t), np.sin(k * t)
    u = init.u.coeffs * c + init.v.coeffs * s / k
    v = -init.u.coeffs * k * s + init.v.coeffs * c
    return PhysicalState(SpectralField(init.support, u, PHYSICAL), SpectralField(init.support, v, PHYSICAL), init.t + t)


# ---------------------------------------------------------------- resonant model

def _second_component(first: np.ndarray) -> np.ndarray:
    """Coefficients of the complex conjugate of a function given by ``first``."""
    return _fields.conj_partner(first)


def z3_field(state: ResonantState) -> tuple[SpectralField, SpectralField]:
    u = state.u.coeffs
    z1 = _fields.z3_coeffs(u, _fields.conj_partner(u), state.u.freqs)
    return (SpectralField(state.u.support, z1, CONJUGATE_PAIR),
            SpectralField(state.u.support, _second_component(z1), CONJUGATE_PAIR))


def z5_field(state: ResonantState) -> tuple[SpectralField, SpectralField]:
    u = state.u.coeffs
    z1 = _fields.z5_coeffs(u, _fields.conj_partner(u), state.u.freqs)
    return (SpectralField(state.u.support, z1, CONJUGATE_PAIR),
            SpectralField(state.u.support, _second_component(z1), CONJUGATE_PAIR))


def superaction_rates(u: SpectralField, du: np.ndarray) -> np.ndarray:
    """dS_n/dt induced by a first-component velocity ``du`` (v = conj u)."""
    prod = 2.0 * np.real(np.conj(u.coeffs) * du)
    n = len(u.support) // 2
    return prod[:n] + prod[n:]


def resonant_rhs(state: ResonantState) -> np.ndarray:
    y = np.concatenate([state.u.coeffs.real, state.u.coeffs.imag])
    out = np.empty_like(y)
    _fields.resonant(0.0, y, state.u.freqs, out)
    n = len(state.u.support)
    return out[:n] + 1j * out[n:]


def integrate_resonant(init: ResonantState, t_end: float, tol: float = 1e-11, sample_times=None):
    """Integrate D1 + Z3 + Z5 (no scalar factor, no higher-order terms)."""
    n = len(init.u.support)
    y0 = np.concatenate([init.u.coeffs.real, init.u.coeffs.imag])
    if sample_times is None:
        sample_times = np.linspace(init.t, t_end, 1001)
    sol = ode.solve(_fields.RESONANT, init.u.freqs, y0, (init.t, t_end), rtol=tol, t_eval=sample_times)
    coeffs = sol.y[:, :n] + 1j * sol.y[:, n:]
    return sol, coeffs


def effective_rates(B: np.ndarray, alphas) -> np.ndarray:
    """dS/dt of the truncated effective model, summed over ordered resonant triplets.

    With theta_{a b l} = Im(B_a B_b conj(B_l)): a sphere that is the sum of a
    triplet receives -(3/16) theta a b l per ordered pair, a sphere that is a
    summand receives +(3/8) theta a b l.
    """
    al = [int(a) for a in alphas]
    index = {a: i for i, a in enumerate(al)}
    rates = np.zeros(len(al))
    for a, b, l in enumerate_triplets(al):
        theta = float(np.imag(B[index[a]] * B[index[b]] * np.conj(B[index[l]])))
        w = theta * a * b * l
        rates[index[l]] += -(3.0 / 16.0) * w
        # (a, b, l) also reads as l = a + b with summand b paired to a
        rates[index[b]] += (3.0 / 8.0) * w
    return rates


def write_series_csv(path, t, series: dict[str, np.ndarray]) -> None:
    table = np.column_stack([series[c] for c in SERIES_COLUMNS])
    write_csv(path, t, table, SERIES_COLUMNS)


def config_params(config: TripletConfig) -> dict:
    return {"support": config.support, "weight": config.measure_weight}
