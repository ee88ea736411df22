"""Frequency configurations, Fourier fields on the two-triplet support, and observables.

The support is the eight signed frequencies ``(a1, a2, a3, a4, -a1, -a2, -a3, -a4)``
with ``a = (m, m+p, 2m+p, 3m+2p)``. A :class:`SpectralField` stores one complex
coefficient per supported frequency; every other coefficient is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Literal

import numpy as np

PHYSICAL = "physical"
CONJUGATE_PAIR = "conjugate_pair"
Flavor = Literal["physical", "conjugate_pair"]

MEASURES = ("unit", "2pi")


class _Degenerate:
    """Marker returned in place of a polar angle when the modulus is below the floor."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Degenerate"

    def __bool__(self) -> bool:
        return False


Degenerate = _Degenerate()


@dataclass(frozen=True)
class TripletConfig:
    m: int
    p: int
    d: int
    m1: int
    alphas: tuple[int, int, int, int]
    sigma: Fraction
    gamma: float
    mu1: float
    mu2: float
    tilde_mu1: float
    tilde_mu2: float
    A: tuple[tuple[int, int], tuple[int, int]]
    detA: int
    delta1: float = 1.0
    measure: str = "unit"

    @property
    def sum123(self) -> int:
        a1, a2, a3, _ = self.alphas
        return a1 * a1 + a2 * a2 + a3 * a3

    @property
    def sum234(self) -> int:
        _, a2, a3, a4 = self.alphas
        return a2 * a2 + a3 * a3 + a4 * a4

    @property
    def gap32(self) -> int:
        """a3^2 - a2^2, the off-diagonal magnitude of the quadratic form."""
        return self.alphas[2] ** 2 - self.alphas[1] ** 2

    @property
    def support(self) -> tuple[int, ...]:
        return standard_support(self.alphas)

    @property
    def measure_weight(self) -> float:
        """Weight w in G = w * sum |k|^2 |u_k|^2."""
        return 1.0 if self.measure == "unit" else (2.0 * math.pi) ** self.d

    def lattice_vectors(self) -> list[tuple[int, ...]]:
        """One representative k_n with |k_n| = a_n per sphere."""
        if self.d == 1:
            return [(a,) for a in self.alphas]
        # lexicographically smallest integer vector of norm a: (-a, 0, ..., 0)
        return [(-a,) + (0,) * (self.d - 1) for a in self.alphas]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "p": self.p,
            "d": self.d,
            "m1": self.m1,
            "alphas": list(self.alphas),
            "sigma": f"{self.sigma.numerator}/{self.sigma.denominator}",
            "gamma": self.gamma,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "tilde_mu1": self.tilde_mu1,
            "tilde_mu2": self.tilde_mu2,
            "A": [list(r) for r in self.A],
            "detA": self.detA,
            "delta1": self.delta1,
            "measure": self.measure,
        }


def alphas_from(m: int, p: int) -> tuple[int, int, int, int]:
    return (m, m + p, 2 * m + p, 3 * m + 2 * p)


def det_formula(alphas: Iterable[int]) -> int:
    a1, a2, a3, a4 = alphas
    return a1**2 * a4**2 + (a1**2 + a4**2) * (a2**2 + a3**2) + 4 * a2**2 * a3**2


def quadratic_form(alphas: Iterable[int]) -> tuple[tuple[int, int], tuple[int, int]]:
    a1, a2, a3, a4 = alphas
    off = a2 * a2 - a3 * a3
    return ((a1 * a1 + a2 * a2 + a3 * a3, off), (off, a2 * a2 + a3 * a3 + a4 * a4))


def couplings(sigma: float) -> tuple[float, float]:
    """(mu1, mu2) as functions of the real ratio sigma = m/p."""
    s = float(sigma)
    num = s * (2.0 + 3.0 * s)
    return num / (6.0 + 18.0 * s + 14.0 * s * s), num / (2.0 + 6.0 * s + 6.0 * s * s)


def scaled_couplings(sigma: float) -> tuple[float, float]:
    """(mu1/sigma, mu2/sigma), finite at sigma = 0 where they equal (1/3, 1)."""
    s = float(sigma)
    return (2.0 + 3.0 * s) / (6.0 + 18.0 * s + 14.0 * s * s), (2.0 + 3.0 * s) / (2.0 + 6.0 * s + 6.0 * s * s)


def make_config(m: int, p: int, d: int = 1, *, delta1: float = 1.0,
                measure: str = "unit") -> TripletConfig:
    if int(m) != m or int(p) != p or int(d) != d:
        raise ValueError("m, p, d must be integers")
    m, p, d = int(m), int(p), int(d)
    if m < 2:
        raise ValueError(f"m must be at least 2, got m={m}")
    if m >= p:
        raise ValueError(f"m must be smaller than p, got m={m}, p={p}")
    if d < 1:
        raise ValueError("d must be positive")
    if delta1 <= 0:
        raise ValueError("delta1 must be positive")
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}")
    al = alphas_from(m, p)
    A = quadratic_form(al)
    det = det_formula(al)
    s123 = A[0][0]
    s234 = A[1][1]
    gap = al[2] ** 2 - al[1] ** 2
    sigma = Fraction(m, p)
    mu1 = gap / s234
    mu2 = gap / s123
    return TripletConfig(
        m=m, p=p, d=d, m1=1 if d == 1 else 2, alphas=al, sigma=sigma,
        gamma=s234 / s123, mu1=mu1, mu2=mu2,
        tilde_mu1=mu1 / float(sigma) - 1.0 / 3.0, tilde_mu2=mu2 / float(sigma) - 1.0,
        A=A, detA=det, delta1=float(delta1), measure=measure,
    )


def config_from_dict(data: dict) -> TripletConfig:
    return make_config(int(data["m"]), int(data["p"]), int(data.get("d", 1)),
                       delta1=float(data.get("delta1", 1.0)),
                       measure=str(data.get("measure", "unit")))


def enumerate_triplets(alphas) -> set[tuple[int, int, int]]:
    """All ordered (a, b, l) drawn from the set with a + b = l (brute force)."""
    if isinstance(alphas, TripletConfig):
        alphas = alphas.alphas
    vals = sorted(set(int(a) for a in alphas))
    present = set(vals)
    return {(a, b, a + b) for a, b in product(vals, vals) if a + b in present}


def expected_triplets(alphas) -> set[tuple[int, int, int]]:
    a1, a2, a3, a4 = alphas
    return {(a1, a2, a3), (a2, a1, a3), (a2, a3, a4), (a3, a2, a4)}


def is_admissible(alphas) -> bool:
    """True when the resonant triplets are exactly the two expected ordered pairs."""
    al = tuple(int(a) for a in alphas)
    return len(set(al)) == 4 and enumerate_triplets(al) == expected_triplets(al)


def standard_support(alphas) -> tuple[int, ...]:
    al = tuple(int(a) for a in alphas)
    return al + tuple(-a for a in al)


def _partner_index(n: int) -> np.ndarray:
    return (np.arange(n) + n // 2) % n


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients on a symmetric support ``(k_1..k_n, -k_1..-k_n)``."""

    support: tuple[int, ...]
    coeffs: np.ndarray
    flavor: Flavor = CONJUGATE_PAIR

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        sup = tuple(int(k) for k in self.support)
        object.__setattr__(self, "support", sup)
        n = len(sup)
        if c.shape != (n,):
            raise ValueError("one coefficient per supported frequency required")
        if n % 2 or any(sup[i] != -sup[i + n // 2] for i in range(n // 2)):
            raise ValueError("support must be ordered (k_1..k_n, -k_1..-k_n)")
        if 0 in sup:
            raise ValueError("zero frequency is not allowed (zero-average fields)")
        if self.flavor not in (PHYSICAL, CONJUGATE_PAIR):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.flavor == PHYSICAL:
            mirror = np.conj(c[_partner_index(n)])
            scale = max(float(np.max(np.abs(c))), 1e-300)
            if np.max(np.abs(c - mirror)) > 1e-14 * scale:
                raise ValueError("physical field violates the reality constraint")

    @classmethod
    def zeros(cls, support, flavor: Flavor = CONJUGATE_PAIR) -> "SpectralField":
        return cls(tuple(support), np.zeros(len(support), complex), flavor)

    @property
    def freqs(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    def coefficient(self, k: int) -> complex:
        try:
            return complex(self.coeffs[self.support.index(int(k))])
        except ValueError:
            return 0.0j

    def conjugate(self) -> "SpectralField":
        """Coefficients of the complex-conjugate function, v_k = conj(u_{-k})."""
        n = len(self.support)
        return SpectralField(self.support, np.conj(self.coeffs[_partner_index(n)]), self.flavor)

    def evaluate(self, x) -> np.ndarray:
        """Point values on [0, 2pi) (d = 1)."""
        x = np.asarray(x, dtype=float)
        return np.exp(1j * np.multiply.outer(x, self.freqs)) @ self.coeffs


def sobolev_norm(fld: SpectralField | np.ndarray, s: float, support=None) -> float:
    if isinstance(fld, SpectralField):
        c, k = fld.coeffs, fld.freqs
    else:
        c, k = np.asarray(fld), np.asarray(support, dtype=float)
    return float(np.sqrt(np.sum(np.abs(c) ** 2 * np.abs(k) ** (2.0 * s))))


@dataclass(frozen=True)
class Observables:
    S: np.ndarray
    B: np.ndarray
    Z123: complex
    Z234: complex
    rho123: float
    rho234: float
    phi123: float | _Degenerate
    phi234: float | _Degenerate
    N1: float
    calN: float | None = None
    extra: dict = field(default_factory=dict)


def sphere_sums(coeffs: np.ndarray, n_spheres: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """S and B per sphere for coefficient arrays of shape (..., 2 n_spheres)."""
    c = np.asarray(coeffs)
    pos = c[..., :n_spheres]
    neg = c[..., n_spheres:2 * n_spheres]
    S = np.abs(pos) ** 2 + np.abs(neg) ** 2
    B = 2.0 * pos * neg
    return S, B


def triple_products(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    B = np.asarray(B)
    z123 = B[..., 0] * B[..., 1] * np.conj(B[..., 2])
    z234 = B[..., 1] * B[..., 2] * np.conj(B[..., 3])
    return z123, z234


def polar_angle(z: complex, floor: float) -> float | _Degenerate:
    if not abs(z) > floor:
        return Degenerate
    return float(np.angle(z) % (2.0 * np.pi))


def degeneracy_floor(S_a: float, S_b: float, S_l: float) -> float:
    return 1e-300 + np.finfo(float).eps * S_a * S_b * S_l


def observables(fld: SpectralField, calN: float | None = None) -> Observables:
    n = len(fld.support) // 2
    if n != 4:
        raise ValueError("observables are defined on the eight-frequency support")
    S, B = sphere_sums(fld.coeffs)
    z123, z234 = triple_products(B)
    al = np.abs(np.asarray(fld.support[:4], dtype=float))
    f123 = degeneracy_floor(S[0], S[1], S[2])
    f234 = degeneracy_floor(S[1], S[2], S[3])
    return Observables(
        S=S, B=B, Z123=complex(z123), Z234=complex(z234),
        rho123=float(abs(z123)), rho234=float(abs(z234)),
        phi123=polar_angle(z123, f123), phi234=polar_angle(z234, f234),
        N1=float(np.sum(al**2 * S)), calN=calN,
    )


# Linear symplectic changes of variables between (f, g), (q, p) and (u~, v~).

_SQRT2 = math.sqrt(2.0)


def _require_flavor(fld: SpectralField, flavor: str) -> None:
    if fld.flavor != flavor:
        raise ValueError(f"expected a {flavor} field, got {fld.flavor}")


def phi2_map(f: SpectralField) -> tuple[SpectralField, SpectralField]:
    """(f, conj f) -> (q, p) with q = (f+g)/sqrt2, p = (f-g)/(i sqrt2)."""
    _require_flavor(f, CONJUGATE_PAIR)
    g = f.conjugate().coeffs
    q = (f.coeffs + g) / _SQRT2
    p = (f.coeffs - g) / (1j * _SQRT2)
    # exact reality by symmetrizing the rounding
    n = len(f.support)
    idx = _partner_index(n)
    q = 0.5 * (q + np.conj(q[idx]))
    p = 0.5 * (p + np.conj(p[idx]))
    return SpectralField(f.support, q, PHYSICAL), SpectralField(f.support, p, PHYSICAL)


def phi2_inverse(q: SpectralField, p: SpectralField) -> SpectralField:
    _require_flavor(q, PHYSICAL)
    _require_flavor(p, PHYSICAL)
    return SpectralField(q.support, (q.coeffs + 1j * p.coeffs) / _SQRT2, CONJUGATE_PAIR)


def phi1_map(q: SpectralField, p: SpectralField) -> tuple[SpectralField, SpectralField]:
    """u~ = |D|^{-1/2} q, v~ = |D|^{1/2} p."""
    k = np.abs(q.freqs)
    return (SpectralField(q.support, q.coeffs / np.sqrt(k), PHYSICAL),
            SpectralField(p.support, p.coeffs * np.sqrt(k), PHYSICAL))


def phi1_inverse(u: SpectralField, v: SpectralField) -> tuple[SpectralField, SpectralField]:
    k = np.abs(u.freqs)
    return (SpectralField(u.support, u.coeffs * np.sqrt(k), PHYSICAL),
            SpectralField(v.support, v.coeffs / np.sqrt(k), PHYSICAL))


def to_physical(f: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Normal-form variable f -> physical displacement and velocity."""
    return phi1_map(*phi2_map(f))


def from_physical(u: SpectralField, v: SpectralField) -> SpectralField:
    return phi2_inverse(*phi1_inverse(u, v))


def calN(u: SpectralField, v: SpectralField) -> float:
    """(||u||_{3/2}^2 + ||v||_{1/2}^2)^{1/2} of a physical displacement/velocity pair."""
    return math.sqrt(sobolev_norm(u, 1.5) ** 2 + sobolev_norm(v, 0.5) ** 2)


def calN_arrays(u: np.ndarray, v: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Vectorized calN over sample rows of full (signed-support) coefficient arrays."""
    ak = np.abs(k)
    return np.sqrt(np.sum(np.abs(u) ** 2 * ak**3 + np.abs(v) ** 2 * ak, axis=-1))
