"""Initial datum for the Kirchhoff flow from a targeted pendulum orbit.

Given (m, p) and the amplitude eps, :func:`make_plan` fixes every constant of
the effective chain. :func:`datum_spec` then turns one State6 value into sphere
amplitudes, and :func:`build_u0` places them on one opposite frequency pair per
sphere.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cascade
from .cascade import EffConstants
from .resonant import CONJUGATE_PAIR, Degenerate, SpectralField, TripletConfig, observables, sobolev_norm

TWO_PI = 2.0 * math.pi


class DatumError(ValueError):
    pass


def amplitude_coefficient(config: TripletConfig) -> float:
    """a1 = (3/32 a_1^3 / (a_1^2 + a_2^2 + a_3^2))^{1/2}, so that A1 = a1 eps^3."""
    return math.sqrt(3.0 / 32.0 * config.alphas[0] ** 3 / config.sum123)


def eps0(config: TripletConfig) -> float:
    a1, _, _, a4 = config.alphas
    return min(1.0,
               math.sqrt(32.0 / 3.0 * config.sum123 / a1**3) / 9.0,
               config.delta1 / (math.sqrt(8.0) * a4 ** config.m1))


@dataclass(frozen=True)
class SynthesisPlan:
    config: TripletConfig
    eps: float
    consts: EffConstants
    eps0: float
    flags: dict
    s: tuple[float, float, float, float]
    a1: float
    a2: float
    b: float
    c1: float
    r1: float

    @property
    def q1(self) -> float:
        return self.consts.q1

    @property
    def q2(self) -> float:
        return self.consts.q2

    @property
    def A1(self) -> float:
        return self.consts.A1

    @property
    def A2(self) -> float:
        return self.consts.A2

    @property
    def B(self) -> float:
        return self.consts.B

    @property
    def admissible(self) -> bool:
        return all(self.flags.values())

    def N1_bands(self) -> dict:
        """Bands of sum a_n^2 S_n on the excursion and rest intervals, in units of eps^2 c1, eps^3 r1."""
        e2, e3 = self.eps**2, self.eps**3
        return {"center": e2 * self.c1, "unit": e3 * self.r1,
                "inside": (e2 * self.c1 + 0.99 * e3 * self.r1, e2 * self.c1 + 2.01 * e3 * self.r1),
                "outside": (e2 * self.c1 - 0.01 * e3 * self.r1, e2 * self.c1 + 1.01 * e3 * self.r1),
                "inside_max": e2 * self.c1 + 1.99 * e3 * self.r1,
                "outside_min": e2 * self.c1 + 0.01 * e3 * self.r1}

    def calN_levels(self) -> dict:
        """Baseline eps c0 and amplitude eps^2 r0 of the norm of the physical solution."""
        c0 = math.sqrt(2.0 * self.c1)
        r0 = math.sqrt(2.0) * self.r1 / math.sqrt(self.c1)
        return {"c0": c0, "r0": r0, "base": self.eps * c0, "swing": self.eps**2 * r0}

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "eps": self.eps, "eps0": self.eps0,
                "flags": dict(self.flags), "constants": self.consts.to_dict(),
                "s": list(self.s), "a1": self.a1, "a2": self.a2, "b": self.b,
                "c1": self.c1, "r1": self.r1}


def make_plan(config: TripletConfig, eps: float) -> SynthesisPlan:
    """All constants for amplitude ``eps``; the smallness conditions become flags."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    al = config.alphas
    q2 = eps * eps
    ratio = al[3] ** 2 / al[2] ** 2
    q1 = (1.0 + 2.0 * ratio / 3.0) * q2
    a1 = amplitude_coefficient(config)
    consts = cascade.from_amplitudes(config, a1 * eps**3, q1, q2, lam=1.0)
    sf = cascade.scaled_form(consts, eps)
    a4sq = al[3] ** 2
    s_closed = (a4sq / (3.0 * al[0] ** 2), a4sq / (3.0 * al[1] ** 2), 2.0 * a4sq / (3.0 * al[2] ** 2), 1.0)
    a2 = a1 / config.gamma
    b = config.sum123 * a1 / 2.0
    flags = {
        "A1_below_q2_over_9": consts.A1 <= q2 / 9.0,
        # holds with equality by the choice of A1; allow for the rounding of eps^3
        "A1_below_q2_power": consts.A1 <= a1 * q2**1.5 * (1.0 + 1e-12),
        "ball": 8.0 * al[3] ** (2 * config.m1) * q2 <= config.delta1**2,
    }
    if not np.allclose(sf.s, s_closed, rtol=1e-9) or not math.isclose(sf.a2, a2, rel_tol=1e-9) \
            or not math.isclose(sf.b, b, rel_tol=1e-9):
        raise AssertionError("scaled constants disagree with their closed forms")
    return SynthesisPlan(config=config, eps=float(eps), consts=consts, eps0=eps0(config), flags=flags,
                         s=s_closed, a1=a1, a2=a2, b=b, c1=7.0 * a4sq / 3.0,
                         r1=2.0 * al[1] * al[2] * a2)


def rn_psin(plan: SynthesisPlan, phi123: float, phi234: float) -> tuple[np.ndarray, np.ndarray]:
    """Moduli and phases of B_n = r_n e^{i psi_n} reproducing the couplings and the two angles."""
    al = plan.config.alphas
    r0 = (4.0 / 3.0 * plan.config.sum123 * plan.A1**2) ** (1.0 / 3.0)
    r = np.array([r0 / al[0], r0 / al[1], r0 / al[2], r0 / (plan.config.gamma * al[3])])
    psi = np.array([phi123, 0.0, 0.0, -phi234], dtype=float)
    return r, psi


def split_complex(s: float, r: float, psi: float) -> tuple[complex, complex]:
    """(z1, z2) with |z1|^2 + |z2|^2 = s and 2 z1 z2 = r e^{i psi}."""
    if not 0.0 <= r <= s:
        raise DatumError(f"need 0 <= r <= s, got r={r}, s={s}")
    rho1 = math.sqrt(0.5 * (s + math.sqrt(max(s * s - r * r, 0.0))))
    rho2 = r / (2.0 * rho1) if rho1 > 0 else 0.0
    return rho1 * cmath.exp(1j * psi), complex(rho2)


def _pair(z) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


@dataclass(frozen=True)
class DatumSpec:
    S0: np.ndarray
    phi123: float
    phi234: float
    r: np.ndarray
    psi: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    lattice: list = field(default_factory=list)

    def __post_init__(self):
        if np.any(self.r <= 0) or np.any(self.r > self.S0):
            raise DatumError(f"need 0 < r_n <= S_n(0); r={self.r.tolist()}, S={self.S0.tolist()}")

    def to_dict(self) -> dict:
        return {"S0": self.S0.tolist(), "phi123": self.phi123, "phi234": self.phi234,
                "r": self.r.tolist(), "psi": self.psi.tolist(),
                "z1": [_pair(z) for z in self.z1], "z2": [_pair(z) for z in self.z2],
                "lattice": [list(k) for k in self.lattice]}


def datum_spec(plan: SynthesisPlan, state6) -> DatumSpec:
    """Sphere amplitudes reproducing S(0) and the two angles of a State6 value."""
    state6 = np.asarray(state6, dtype=float)
    S0 = state6[:4].copy()
    phi123, phi234 = float(state6[4] % TWO_PI), float(state6[5] % TWO_PI)
    r, psi = rn_psin(plan, phi123, phi234)
    if np.any(r > S0):
        bad = [i + 1 for i in range(4) if r[i] > S0[i]]
        raise DatumError(f"r_n exceeds S_n(0) on spheres {bad} (r1 = {r[0]:.3e}, q2/2 = {plan.q2 / 2:.3e})")
    pairs = [split_complex(S0[i], r[i], psi[i]) for i in range(4)]
    return DatumSpec(S0, phi123, phi234, r, psi,
                     np.array([z[0] for z in pairs]), np.array([z[1] for z in pairs]),
                     plan.config.lattice_vectors())


def build_u0(spec: DatumSpec, config: TripletConfig) -> SpectralField:
    """u0 = sum_n z1_n e^{i a_n x} + z2_n e^{-i a_n x}, as a conjugate-pair field."""
    return SpectralField(config.support, np.concatenate([spec.z1, spec.z2]), CONJUGATE_PAIR)


def _angle_gap(a: float, b: float) -> float:
    return abs((a - b + math.pi) % TWO_PI - math.pi)


def verify_u0(u0: SpectralField, plan: SynthesisPlan, spec: DatumSpec, tol: float = 1e-11) -> dict:
    """Relative residuals of the eight target identities, the norm bounds and ball membership."""
    obs = observables(u0)
    al = plan.config.alphas
    res = {f"S{n + 1}": abs(obs.S[n] - spec.S0[n]) / abs(spec.S0[n]) for n in range(4)}
    res["phi123"] = math.inf if obs.phi123 is Degenerate else _angle_gap(float(obs.phi123), spec.phi123)
    res["phi234"] = math.inf if obs.phi234 is Degenerate else _angle_gap(float(obs.phi234), spec.phi234)
    c123 = 0.375 * obs.rho123 * al[0] * al[1] * al[2]
    c234 = 0.375 * obs.rho234 * al[1] * al[2] * al[3]
    res["c123"] = abs(c123 - plan.consts.c123) / plan.consts.c123
    res["c234"] = abs(c234 - plan.consts.c234) / plan.consts.c234
    norms = {}
    for s in sorted({1, plan.config.m1}):
        value = sobolev_norm(u0, s) ** 2
        bound = 8.0 * al[3] ** (2 * s) * plan.q2
        norms[s] = {"norm_sq": value, "bound": bound, "ok": value <= bound}
    in_ball = sobolev_norm(u0, plan.config.m1) <= plan.config.delta1
    identities_ok = max(res.values()) <= tol
    return {
        "residuals": res,
        "max_residual": max(res.values()),
        "identities_ok": identities_ok,
        "norm_bounds": norms,
        "in_ball": in_ball,
        # the ball is only promised when the amplitude meets the third smallness condition
        "ball_ok": in_ball or not plan.flags["ball"],
        "passed": identities_ok and all(v["ok"] for v in norms.values()) and (in_ball or not plan.flags["ball"]),
    }


def synthesize(plan: SynthesisPlan, xieta_state) -> tuple[DatumSpec, SpectralField, dict]:
    """(xi, eta) state at the start of the itinerary -> datum spec, u0 and its check report."""
    state6 = cascade.xieta_to_six(np.asarray(xieta_state, dtype=float), plan.consts)
    spec = datum_spec(plan, state6)
    u0 = build_u0(spec, plan.config)
    return spec, u0, verify_u0(u0, plan, spec)


def field_to_dict(u: SpectralField) -> dict:
    return {"support": list(u.support), "flavor": u.flavor, "coeffs": [_pair(c) for c in u.coeffs]}


def write_datum_json(path, plan: SynthesisPlan, spec: DatumSpec, u0: SpectralField, report: dict) -> None:
    out = {"plan": plan.to_dict(), "spec": spec.to_dict(), "u0": field_to_dict(u0),
           "report": _jsonable(report)}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(out, indent=2))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return _pair(obj)
    return obj
