"""Compiled vector fields shared by every integrator call.

Each field has the signature ``f(t, y, p, out)`` and writes the derivative into
``out``. :func:`evaluate` dispatches on an integer kind so that the integrator
core is compiled (and disk-cached) once, independently of the vector field.
"""

from __future__ import annotations

import numpy as np
from numba import njit

KIRCHHOFF = 0
RESONANT = 1
SIX = 2
FOUR = 3
XY = 4
TILDE = 5
XIETA = 6
XIETA_VAR = 7
PENDULUM = 8
SZ = 9

# Kirchhoff: y = [Re u_n, Im u_n, Re v_n, Im v_n] over the positive frequencies;
# the negative frequencies follow from the reality constraint.
# p = [weight, linear_flag, k_1, ..., k_n]


@njit(cache=True)
def kirchhoff_g(y, p):
    n = y.size // 4
    w = p[0]
    acc = 0.0
    for i in range(n):
        k2 = p[2 + i] * p[2 + i]
        acc += k2 * (y[i] * y[i] + y[n + i] * y[n + i])
    return 2.0 * w * acc


@njit(cache=True)
def kirchhoff(t, y, p, out):
    n = y.size // 4
    g = 0.0 if p[1] != 0.0 else kirchhoff_g(y, p)
    for i in range(n):
        k2 = p[2 + i] * p[2 + i]
        out[i] = y[2 * n + i]
        out[n + i] = y[3 * n + i]
        out[2 * n + i] = -(1.0 + g) * k2 * y[i]
        out[3 * n + i] = -(1.0 + g) * k2 * y[n + i]


# Resonant model D1 + Z3 + Z5 on the eight signed frequencies.
# y = [Re u_k, Im u_k], ordering (a1..a4, -a1..-a4); p = [k_1..k_8] (signed).


@njit(cache=True)
def _partner(i, n):
    return (i + n // 2) % n


@njit(cache=True)
def z3_coeffs(u, v, ks):
    """First component of the cubic resonant operator, one coefficient per frequency."""
    n = ks.size
    out = np.zeros(n, dtype=np.complex128)
    for ik in range(n):
        ak = abs(ks[ik])
        acc = 0.0j
        for ij in range(n):
            aj = abs(ks[ij])
            if aj == ak:
                acc += u[ij] * u[_partner(ij, n)] * aj * aj
        out[ik] = -0.25j * acc * v[ik]
    return out


@njit(cache=True)
def _ratio(num, den):
    # 0/0 = 0 convention; a nonzero numerator over zero never arises here
    if den == 0.0:
        return 0.0
    return num / den


@njit(cache=True)
def z5_coeffs(u, v, ks):
    """First component of the quintic resonant operator, one coefficient per frequency.

    Two families of terms are real multiples of u_k (their products reduce to
    moduli); they are accumulated as a real coefficient so that rounding cannot
    leak into the superaction balance.
    """
    n = ks.size
    out = np.zeros(n, dtype=np.complex128)
    bu = np.empty(n, dtype=np.complex128)
    mod2 = np.empty(n)
    for i in range(n):
        bu[i] = u[i] * u[_partner(i, n)]
        mod2[i] = u[i].real ** 2 + u[i].imag ** 2
    for ik in range(n):
        k = abs(ks[ik])
        acc = 0.0j
        phase = 0.0
        for ij in range(n):
            j = abs(ks[ij])
            for il in range(n):
                l = abs(ks[il])
                if j == l:
                    # bu_j bv_l = |bu_j|^2 on a common sphere
                    delta = 1.0 if l == k else 0.0
                    coef = 1.0 / (j + k) - _ratio(1.0 - delta, l - k)
                    bb = bu[ij].real ** 2 + bu[ij].imag ** 2
                    phase += (1.0 / 32.0) * bb * j * j * l * l * coef
                if k == j + l:
                    acc += (3.0 / 32.0) * bu[ij] * bu[il] * v[ik] * j * l * k
                if j == k:
                    # bu_j v_k = u_k |u_-k|^2 and u_l v_-l = |u_l|^2
                    delta = 1.0 if l == j else 0.0
                    coef = 6.0 + l / (l + j) + _ratio(l * (1.0 - delta), l - j)
                    phase += (1.0 / 16.0) * mod2[_partner(ik, n)] * mod2[il] * j * j * l * coef
                if k == j - l:
                    acc += (3.0 / 16.0) * bu[ij] * v[il] * v[_partner(il, n)] * v[ik] * j * l * k
        out[ik] = 1.0j * (acc + phase * u[ik])
    return out


@njit(cache=True)
def conj_partner(u):
    """Coefficients of the complex-conjugate function: v_k = conj(u_{-k})."""
    n = u.size
    v = np.empty(n, dtype=np.complex128)
    for i in range(n):
        v[i] = np.conj(u[_partner(i, n)])
    return v


@njit(cache=True)
def resonant(t, y, p, out):
    n = y.size // 2
    u = y[:n] + 1j * y[n:]
    v = conj_partner(u)
    du = z3_coeffs(u, v, p) + z5_coeffs(u, v, p)
    for i in range(n):
        du[i] += -1j * abs(p[i]) * u[i]
        out[i] = du[i].real
        out[n + i] = du[i].imag


# Truncated effective system: y = [S1..S4, phi123, phi234];
# p = [c123, c234, a1^2, a2^2, a3^2, a4^2].


@njit(cache=True)
def six(t, y, p, out):
    c123, c234 = p[0], p[1]
    s1 = np.sin(y[4])
    s2 = np.sin(y[5])
    out[0] = c123 * s1
    out[1] = c123 * s1 + c234 * s2
    out[2] = -c123 * s1 + c234 * s2
    out[3] = -c234 * s2
    out[4] = -0.5 * (p[2] * y[0] + p[3] * y[1] - p[4] * y[2])
    out[5] = -0.5 * (p[3] * y[1] + p[4] * y[2] - p[5] * y[3])


# Same system with complex triple products: y = [S1..S4, Re Z123, Im Z123, Re Z234, Im Z234];
# p = [a1..a4].


@njit(cache=True)
def sz(t, y, p, out):
    k123 = 0.375 * p[0] * p[1] * p[2]
    k234 = 0.375 * p[1] * p[2] * p[3]
    th1 = y[5]
    th2 = y[7]
    out[0] = k123 * th1
    out[1] = k123 * th1 + k234 * th2
    out[2] = -k123 * th1 + k234 * th2
    out[3] = -k234 * th2
    w1 = -0.5 * (p[0] ** 2 * y[0] + p[1] ** 2 * y[1] - p[2] ** 2 * y[2])
    w2 = -0.5 * (p[1] ** 2 * y[1] + p[2] ** 2 * y[2] - p[3] ** 2 * y[3])
    # dZ/dt = i w Z
    out[4] = -w1 * y[5]
    out[5] = w1 * y[4]
    out[6] = -w2 * y[7]
    out[7] = w2 * y[6]


# y = [S3, S4, phi123, phi234]; p = [c123, c234, E1, E2, a1^2..a4^2]


@njit(cache=True)
def four(t, y, p, out):
    c123, c234, e1, e2 = p[0], p[1], p[2], p[3]
    s3, s4 = y[0], y[1]
    sa = e1 - s3 - s4
    sb = e2 - s3 - 2.0 * s4
    sn1 = np.sin(y[2])
    sn2 = np.sin(y[3])
    out[0] = -c123 * sn1 + c234 * sn2
    out[1] = -c234 * sn2
    out[2] = -0.5 * (p[4] * sa + p[5] * sb - p[6] * s3)
    out[3] = -0.5 * (p[5] * sb + p[6] * s3 - p[7] * s4)


# y = [x1, x2, y1, y2]; p = [c123, c234, b1, b2, A11, A12, A22]
# (b = 0 gives the translated system)


@njit(cache=True)
def xy(t, y, p, out):
    out[0] = -0.5 * p[2] + 0.5 * (p[4] * y[2] + p[5] * y[3])
    out[1] = -0.5 * p[3] + 0.5 * (p[5] * y[2] + p[6] * y[3])
    out[2] = -p[0] * np.sin(y[0])
    out[3] = -p[1] * np.sin(y[1])


# y = [xi1, eta1, xi2, eta2]; p = [mu1, mu2, lam]


@njit(cache=True)
def xieta(t, y, p, out):
    out[0] = y[1] - p[0] * y[3]
    out[1] = -np.sin(y[0])
    out[2] = y[3] - p[1] * y[1]
    out[3] = -p[2] * np.sin(y[2])


@njit(cache=True)
def xieta_var(t, y, p, out):
    xieta(t, y, p, out)
    c1 = np.cos(y[0])
    c2 = p[2] * np.cos(y[2])
    for j in range(4):
        r0 = y[4 + j]
        r1 = y[8 + j]
        r2 = y[12 + j]
        r3 = y[16 + j]
        out[4 + j] = r1 - p[0] * r3
        out[8 + j] = -c1 * r0
        out[12 + j] = r3 - p[1] * r1
        out[16 + j] = -c2 * r2


@njit(cache=True)
def pendulum(t, y, p, out):
    out[0] = y[1]
    out[1] = -np.sin(y[0])


@njit(cache=True)
def evaluate(kind, t, y, p, out):
    if kind == KIRCHHOFF:
        kirchhoff(t, y, p, out)
    elif kind == RESONANT:
        resonant(t, y, p, out)
    elif kind == SIX:
        six(t, y, p, out)
    elif kind == FOUR:
        four(t, y, p, out)
    elif kind == XY or kind == TILDE:
        xy(t, y, p, out)
    elif kind == XIETA:
        xieta(t, y, p, out)
    elif kind == XIETA_VAR:
        xieta_var(t, y, p, out)
    elif kind == SZ:
        sz(t, y, p, out)
    elif kind == PENDULUM:
        pendulum(t, y, p, out)
    else:
        out[:] = np.nan
