"""Adaptive Dormand–Prince 8(5,3) integrator with dense output and crossing events.

The stepping logic, error norm and seventh-degree interpolant follow
``scipy.integrate.DOP853``; the Butcher tableau is taken from scipy. The core is
compiled with numba and dispatches on an integer vector-field kind
(see :mod:`kirchhoff_chaos._fields`), which lets a single cached binary serve
every flow in the package.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _tab

from ._fields import evaluate


def _drop_stale_cache() -> None:
    """Evict this module's numba cache when the vector fields change.

    numba validates a cached function against its own source file only, while
    the compiled integrator inlines the fields of another module.
    """
    here = Path(__file__).resolve().parent
    cache = here / "__pycache__"
    try:
        digest = hashlib.sha1((here / "_fields.py").read_bytes()).hexdigest()
        stamp = cache / "ode.fields.sha1"
        if stamp.exists() and stamp.read_text() == digest:
            return
        for f in cache.glob("ode.*.nb[ic]"):
            f.unlink()
        cache.mkdir(exist_ok=True)
        stamp.write_text(digest)
    except OSError:
        pass


_drop_stale_cache()

N_STAGES = _tab.N_STAGES
N_EXT = _tab.N_STAGES_EXTENDED
_A = np.ascontiguousarray(_tab.A[:N_STAGES, :N_STAGES])
_B = np.ascontiguousarray(_tab.B)
_C = np.ascontiguousarray(_tab.C[:N_STAGES])
_E3 = np.ascontiguousarray(_tab.E3)
_E5 = np.ascontiguousarray(_tab.E5)
_D = np.ascontiguousarray(_tab.D)
_A_EXTRA = np.ascontiguousarray(_tab.A[N_STAGES + 1:])
_C_EXTRA = np.ascontiguousarray(_tab.C[N_STAGES + 1:])
_N_INTERP = _tab.INTERPOLATOR_POWER

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXP = -1.0 / 8.0
_EPS = np.finfo(float).eps

STATUS_MESSAGES = {
    0: "reached end of interval",
    1: "terminal event",
    -1: "step size underflow",
    -2: "maximum number of steps exceeded",
    -3: "event capacity exhausted",
    -4: "non-finite derivative at the initial state",
}


@njit(cache=True)
def _rms(x):
    return np.sqrt(np.sum(x * x) / x.size)


@njit(cache=True)
def _initial_step(kind, p, t0, y0, f0, direction, span, rtol, atol):
    if span == 0.0:
        return 0.0
    scale = atol + np.abs(y0) * rtol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * direction * f0
    f1 = np.empty_like(y0)
    evaluate(kind, t0 + h0 * direction, y1, p, f1)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, span)


@njit(cache=True)
def _dense(F, y_old, t_old, h, t, out):
    x = (t - t_old) / h
    out[:] = 0.0
    m = F.shape[0]
    for i in range(m):
        out += F[m - 1 - i]
        if i % 2 == 0:
            out *= x
        else:
            out *= 1.0 - x
    out += y_old


@njit(cache=True)
def _dense_comp(F, y_old, t_old, h, t, c):
    x = (t - t_old) / h
    acc = 0.0
    m = F.shape[0]
    for i in range(m):
        acc += F[m - 1 - i, c]
        if i % 2 == 0:
            acc *= x
        else:
            acc *= 1.0 - x
    return acc + y_old[c]


@njit(cache=True)
def _locate(F, y_old, t_old, h, c, level, ga, gb):
    """Illinois iteration for the crossing of component c through level."""
    ta = t_old
    tb = t_old + h
    fa = ga
    fb = gb
    side = 0
    tm = tb
    for _ in range(200):
        if fb == fa:
            tm = 0.5 * (ta + tb)
        else:
            tm = (ta * fb - tb * fa) / (fb - fa)
        lo = min(ta, tb)
        hi = max(ta, tb)
        if not (lo < tm < hi):
            tm = 0.5 * (ta + tb)
        fm = _dense_comp(F, y_old, t_old, h, tm, c) - level
        if fm == 0.0:
            return tm
        if (fm > 0.0) == (fb > 0.0):
            tb = tm
            fb = fm
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            ta = tm
            fa = fm
            if side == 1:
                fb *= 0.5
            side = 1
        if abs(tb - ta) <= 4.0 * _EPS * max(abs(tm), 1.0):
            break
    return tm


@njit(cache=True)
def _solve(kind, p, t0, y0, t_end, rtol, atol, max_step, first_step, max_steps,
           t_eval, ev_comp, ev_level, ev_period, ev_dir, ev_stop, ev_cap):
    n = y0.size
    direction = 1.0 if t_end >= t0 else -1.0
    n_ev = ev_comp.size
    n_eval = t_eval.size

    ys = np.empty((n_eval, n))
    ev_id = np.empty(ev_cap, dtype=np.int64)
    ev_t = np.empty(ev_cap)
    ev_y = np.empty((ev_cap, n))
    ev_count = np.zeros(n_ev, dtype=np.int64)
    n_rec = 0

    K = np.zeros((N_EXT, n))
    F = np.empty((_N_INTERP, n))
    y = y0.copy()
    t = t0
    f = np.empty(n)
    evaluate(kind, t, y, p, f)
    nfev = 1
    n_acc = 0
    n_rej = 0

    idx = 0
    while idx < n_eval and (t_eval[idx] - t0) * direction <= 0.0:
        ys[idx] = y0
        idx += 1

    span = abs(t_end - t0)
    if first_step > 0.0:
        h_abs = first_step
    else:
        h_abs = _initial_step(kind, p, t0, y, f, direction, span, rtol, atol)
        nfev += 1

    y_new = np.empty(n)
    f_new = np.empty(n)
    ytmp = np.empty(n)
    dy = np.empty(n)
    found_t = np.empty(64)
    found_i = np.empty(64, dtype=np.int64)
    found_lev = np.empty(64)
    status = 0 if np.all(np.isfinite(f)) else -4
    steps = 0

    while status == 0 and (t_end - t) * direction > 0.0:
        if steps >= max_steps:
            status = -2
            break
        steps += 1
        min_step = 10.0 * max(abs(t) * _EPS, 5e-324)
        if h_abs > max_step:
            h_abs = max_step
        elif h_abs < min_step:
            h_abs = min_step
        accepted = False
        rejected = False
        h = 0.0
        t_new = t
        while not accepted:
            # also catches a NaN step size
            if not h_abs >= min_step:
                status = -1
                break
            h = h_abs * direction
            t_new = t + h
            if direction * (t_new - t_end) > 0.0:
                t_new = t_end
            h = t_new - t
            h_abs = abs(h)

            K[0] = f
            for s in range(1, N_STAGES):
                dy[:] = 0.0
                for j in range(s):
                    dy += _A[s, j] * K[j]
                ytmp[:] = y + h * dy
                evaluate(kind, t + _C[s] * h, ytmp, p, K[s])
            dy[:] = 0.0
            for j in range(N_STAGES):
                dy += _B[j] * K[j]
            y_new[:] = y + h * dy
            evaluate(kind, t_new, y_new, p, f_new)
            K[N_STAGES] = f_new
            nfev += N_STAGES

            e5sq = 0.0
            e3sq = 0.0
            for i in range(n):
                sc = atol[i] + max(abs(y[i]), abs(y_new[i])) * rtol
                a5 = 0.0
                a3 = 0.0
                for j in range(N_STAGES + 1):
                    a5 += K[j, i] * _E5[j]
                    a3 += K[j, i] * _E3[j]
                a5 /= sc
                a3 /= sc
                e5sq += a5 * a5
                e3sq += a3 * a3
            if e5sq == 0.0 and e3sq == 0.0:
                err = 0.0
            else:
                err = h_abs * e5sq / np.sqrt((e5sq + 0.01 * e3sq) * n)

            if err < 1.0:
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * err ** ERR_EXP)
                if rejected:
                    factor = min(1.0, factor)
                h_abs *= factor
                accepted = True
            else:
                if np.isfinite(err):
                    h_abs *= max(MIN_FACTOR, SAFETY * err ** ERR_EXP)
                else:
                    h_abs *= MIN_FACTOR
                rejected = True
                n_rej += 1
        if status != 0:
            break
        n_acc += 1

        # events on this step
        n_found = 0
        for e in range(n_ev):
            c = ev_comp[e]
            a = y[c]
            b = y_new[c]
            if a == b:
                continue
            dir_fwd = (1 if b > a else -1) * (1 if direction > 0 else -1)
            if ev_dir[e] != 0 and ev_dir[e] != dir_fwd:
                continue
            L = ev_level[e]
            P = ev_period[e]
            if P > 0.0:
                k0 = np.floor((a - L) / P)
                k1 = np.floor((b - L) / P)
                if k1 > k0:
                    kk = k0 + 1.0
                    while kk <= k1 and n_found < 64:
                        found_i[n_found] = e
                        found_lev[n_found] = L + kk * P
                        n_found += 1
                        kk += 1.0
                elif k1 < k0:
                    kk = k0
                    if a - L == k0 * P:
                        kk = k0 - 1.0
                    while kk > k1 and n_found < 64:
                        found_i[n_found] = e
                        found_lev[n_found] = L + kk * P
                        n_found += 1
                        kk -= 1.0
            else:
                g0 = a - L
                g1 = b - L
                if (g0 < 0.0 and g1 >= 0.0) or (g0 > 0.0 and g1 <= 0.0):
                    found_i[n_found] = e
                    found_lev[n_found] = L
                    n_found += 1

        need_dense = n_found > 0 or (idx < n_eval and (t_eval[idx] - t_new) * direction <= 0.0)
        if need_dense:
            for s in range(N_STAGES + 1, N_EXT):
                dy[:] = 0.0
                arow = _A_EXTRA[s - N_STAGES - 1]
                for j in range(s):
                    dy += arow[j] * K[j]
                ytmp[:] = y + h * dy
                evaluate(kind, t + _C_EXTRA[s - N_STAGES - 1] * h, ytmp, p, K[s])
            nfev += N_EXT - N_STAGES - 1
            F[0] = y_new - y
            F[1] = h * f - F[0]
            F[2] = 2.0 * F[0] - h * (f_new + f)
            for r in range(_N_INTERP - 3):
                acc = np.zeros(n)
                for j in range(N_EXT):
                    acc += _D[r, j] * K[j]
                F[3 + r] = h * acc

        t_stop = t_new
        terminal = False
        if n_found > 0:
            for q in range(n_found):
                c = ev_comp[found_i[q]]
                lev = found_lev[q]
                found_t[q] = _locate(F, y, t, h, c, lev, y[c] - lev, y_new[c] - lev)
            # insertion sort along the direction of integration
            for q in range(1, n_found):
                tq = found_t[q]
                iq = found_i[q]
                r = q - 1
                while r >= 0 and (found_t[r] - tq) * direction > 0.0:
                    found_t[r + 1] = found_t[r]
                    found_i[r + 1] = found_i[r]
                    r -= 1
                found_t[r + 1] = tq
                found_i[r + 1] = iq
            for q in range(n_found):
                if n_rec >= ev_cap:
                    status = -3
                    t_stop = found_t[q]
                    terminal = True
                    break
                e = found_i[q]
                ev_id[n_rec] = e
                ev_t[n_rec] = found_t[q]
                _dense(F, y, t, h, found_t[q], ytmp)
                ev_y[n_rec] = ytmp
                n_rec += 1
                ev_count[e] += 1
                if ev_stop[e] > 0 and ev_count[e] >= ev_stop[e]:
                    status = 1
                    t_stop = found_t[q]
                    terminal = True
                    break

        while idx < n_eval and (t_eval[idx] - t_stop) * direction <= 0.0:
            _dense(F, y, t, h, t_eval[idx], ys[idx])
            idx += 1

        if terminal:
            _dense(F, y, t, h, t_stop, ytmp)
            y[:] = ytmp
            t = t_stop
            break
        y[:] = y_new
        f[:] = f_new
        t = t_new

    return (status, t, y, ys, idx, ev_id[:n_rec].copy(), ev_t[:n_rec].copy(),
            ev_y[:n_rec].copy(), nfev, n_acc, n_rej)


@dataclass(frozen=True)
class Crossing:
    """Crossing of ``y[component]`` through ``level`` (or ``level + k*period``).

    ``direction`` is +1/-1 for increasing/decreasing in forward time, 0 for both;
    ``terminal`` stops the integration after that many occurrences (0: never).
    """

    component: int
    level: float = 0.0
    period: float = 0.0
    direction: int = 0
    terminal: int = 0


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    t_final: float
    y_final: np.ndarray
    status: int
    event_t: list[np.ndarray] = field(default_factory=list)
    event_y: list[np.ndarray] = field(default_factory=list)
    nfev: int = 0
    n_accepted: int = 0
    n_rejected: int = 0

    @property
    def success(self) -> bool:
        return self.status >= 0

    @property
    def message(self) -> str:
        return STATUS_MESSAGES.get(self.status, "unknown")

    def stats(self) -> dict:
        return {
            "status": self.status,
            "message": self.message,
            "nfev": self.nfev,
            "accepted": self.n_accepted,
            "rejected": self.n_rejected,
        }


def solve(kind: int, params, y0, t_span: tuple[float, float], *, rtol: float = 1e-11,
          atol=None, t_eval=None, events: Sequence[Crossing] = (),
          max_step: float = np.inf, first_step: float = 0.0,
          max_steps: int = 50_000_000, event_capacity: int = 100_000) -> Solution:
    """Integrate the compiled vector field ``kind`` over ``t_span``.

    ``atol`` defaults to ``rtol`` times the largest initial component (floored at
    ``rtol**2``); it may be a scalar or a per-component array.
    """
    y0 = np.ascontiguousarray(y0, dtype=float)
    p = np.ascontiguousarray(params, dtype=float)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if atol is None:
        atol = rtol * max(float(np.max(np.abs(y0))) if y0.size else 1.0, rtol)
    atol_arr = np.broadcast_to(np.asarray(atol, dtype=float), y0.shape).copy()
    te = np.empty(0) if t_eval is None else np.ascontiguousarray(t_eval, dtype=float)
    if te.size > 1 and np.any(np.diff(te) * (1 if t1 >= t0 else -1) < 0):
        raise ValueError("t_eval must be sorted along the direction of integration")
    comp = np.array([e.component for e in events], dtype=np.int64)
    lev = np.array([e.level for e in events], dtype=float)
    per = np.array([e.period for e in events], dtype=float)
    dirs = np.array([e.direction for e in events], dtype=np.int64)
    stop = np.array([e.terminal for e in events], dtype=np.int64)
    out = _solve(int(kind), p, t0, y0, t1, float(rtol), atol_arr, float(max_step),
                 float(first_step), int(max_steps), te, comp, lev, per, dirs, stop,
                 int(event_capacity))
    status, tf, yf, ys, n_done, ev_id, ev_t, ev_y, nfev, n_acc, n_rej = out
    event_t = [ev_t[ev_id == i] for i in range(len(events))]
    event_y = [ev_y[ev_id == i] for i in range(len(events))]
    return Solution(t=te[:n_done], y=ys[:n_done], t_final=float(tf), y_final=yf,
                    status=int(status), event_t=event_t, event_y=event_y,
                    nfev=int(nfev), n_accepted=int(n_acc), n_rejected=int(n_rej))
