import math

import numpy as np
import pytest
from scipy import integrate, special

from kirchhoff_chaos import _fields, ode


def pendulum_rhs(t, y):
    return [y[1], -math.sin(y[0])]


def xieta_rhs(mu1, mu2, lam):
    def f(t, y):
        return [y[1] - mu1 * y[3], -math.sin(y[0]), y[3] - mu2 * y[1], -lam * math.sin(y[2])]
    return f


class TestAgainstScipy:
    def test_pendulum_trajectory(self):
        y0 = [0.3, 1.1]
        t = np.linspace(0.0, 30.0, 61)
        ours = ode.solve(_fields.PENDULUM, [], y0, (0.0, 30.0), rtol=1e-12, atol=1e-14, t_eval=t)
        ref = integrate.solve_ivp(pendulum_rhs, (0.0, 30.0), y0, method="DOP853", rtol=1e-13,
                                  atol=1e-14, t_eval=t)
        assert ours.success
        assert np.max(np.abs(ours.y - ref.y.T)) < 1e-10

    def test_coupled_pendulums(self):
        y0 = [0.1, 1.2, 3.0, 0.05]
        t = np.linspace(0.0, 20.0, 41)
        p = (0.0238, 0.0712, 1.0)
        ours = ode.solve(_fields.XIETA, p, y0, (0.0, 20.0), rtol=1e-12, atol=1e-14, t_eval=t)
        ref = integrate.solve_ivp(xieta_rhs(*p), (0.0, 20.0), y0, method="DOP853", rtol=1e-13,
                                  atol=1e-14, t_eval=t)
        assert np.max(np.abs(ours.y - ref.y.T)) < 1e-9

    def test_backward_integration_returns(self):
        y0 = np.array([0.4, 0.2])
        fwd = ode.solve(_fields.PENDULUM, [], y0, (0.0, 15.0), rtol=1e-13, atol=1e-15)
        back = ode.solve(_fields.PENDULUM, [], fwd.y_final, (15.0, 0.0), rtol=1e-13, atol=1e-15)
        assert np.max(np.abs(back.y_final - y0)) < 1e-11


class TestDenseOutput:
    def test_harmonic_closed_form(self):
        # single Kirchhoff mode with the nonlinearity switched off: u'' = -k^2 u
        k = 3.0
        p = np.array([1.0, 1.0, k])
        y0 = np.array([0.7, -0.2, 0.0, 0.5])
        t = np.linspace(0.0, 10.0, 997)
        sol = ode.solve(_fields.KIRCHHOFF, p, y0, (0.0, 10.0), rtol=1e-12, atol=1e-14, t_eval=t)
        u0 = y0[0] + 1j * y0[1]
        v0 = y0[2] + 1j * y0[3]
        exact = u0 * np.cos(k * t) + v0 * np.sin(k * t) / k
        assert np.max(np.abs(sol.y[:, 0] + 1j * sol.y[:, 1] - exact)) < 1e-11

    def test_unsorted_sample_times_rejected(self):
        with pytest.raises(ValueError):
            ode.solve(_fields.PENDULUM, [], [0.1, 0.0], (0.0, 1.0), t_eval=[0.5, 0.2])


class TestEvents:
    def test_upward_zero_crossings_give_period(self):
        a = 1.0
        period = 4.0 * special.ellipk(a / 2.0)
        assert period == pytest.approx(7.4163, abs=1e-4)
        y0 = [0.0, math.sqrt(2.0 * a)]
        sol = ode.solve(_fields.PENDULUM, [], y0, (0.0, 5.5 * period), rtol=1e-13, atol=1e-15,
                        events=[ode.Crossing(0, 0.0, 0.0, +1)])
        ups = sol.event_t[0]
        assert len(ups) == 5
        assert np.allclose(np.diff(ups), period, rtol=0, atol=1e-10)

    def test_terminal_event_stops(self):
        sol = ode.solve(_fields.PENDULUM, [], [0.0, 1.0], (0.0, 100.0), rtol=1e-12,
                        events=[ode.Crossing(0, 0.0, 0.0, -1, terminal=1)])
        assert sol.t_final < 100.0
        assert abs(sol.y_final[0]) < 1e-12
        assert sol.y_final[1] < 0

    def test_periodic_levels(self):
        # rotating pendulum crosses xi = pi (mod 2 pi) once per revolution
        sol = ode.solve(_fields.PENDULUM, [], [0.0, 2.5], (0.0, 40.0), rtol=1e-12,
                        events=[ode.Crossing(0, math.pi, 2 * math.pi, +1)])
        hits = sol.event_y[0][:, 0]
        assert len(hits) >= 3
        assert np.allclose((hits - math.pi) / (2 * math.pi), np.round((hits - math.pi) / (2 * math.pi)),
                           atol=1e-10)

    def test_stats(self):
        sol = ode.solve(_fields.PENDULUM, [], [0.1, 0.0], (0.0, 1.0))
        st = sol.stats()
        assert st["accepted"] > 0 and st["nfev"] > st["accepted"]
        assert sol.message
