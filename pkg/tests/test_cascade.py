import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kirchhoff_chaos import cascade as cc
from kirchhoff_chaos import resonant as rc


@pytest.fixture(scope="module")
def consts23(cfg23):
    # couplings and first integrals of a generic state of the (2, 3) configuration
    return cc.from_couplings(cfg23, c123=0.8, c234=0.3, E1=1.7, E2=2.9)


@pytest.fixture(scope="module")
def consts225():
    cfg = rc.make_config(2, 25)
    return cc.from_amplitudes(cfg, A1=2e-3, q1=0.011, q2=0.0025)


def state6(consts, rng):
    """Random State6 with all superactions positive for the given first integrals."""
    s3 = rng.uniform(0.05, 0.9) * min(consts.E1, consts.E2)
    s4 = rng.uniform(0.05, 0.9) * min(consts.E1 - s3, consts.E2 - s3) / 2
    return np.array([consts.E1 - s3 - s4, consts.E2 - s3 - 2 * s4, s3, s4, *rng.uniform(0, 2 * math.pi, 2)])


class TestConstants:
    def test_translation_solves_linear_system(self, cfg23):
        b = (1.0, 1.0)
        q = cc.q_from_b(cfg23, *b)
        ref = np.linalg.solve(np.array([[78.0, -24.0], [-24.0, 218.0]]), np.array(b))
        assert np.allclose(q, ref, rtol=1e-15)
        assert q[0] == pytest.approx(242 / 16428, rel=1e-15)
        assert q[1] == pytest.approx(102 / 16428, rel=1e-15)
        assert q[0] == pytest.approx(0.014731, abs=1e-6) and q[1] == pytest.approx(0.0062089, abs=1e-7)

    def test_b_E_inverse(self, cfg23):
        assert np.allclose(cc.E_from_b(cfg23, *cc.b_from_E(cfg23, 1.3, -0.4)), (1.3, -0.4), rtol=1e-15)
        assert np.allclose(cc.b_from_q(cfg23, *cc.q_from_b(cfg23, 0.2, 0.7)), (0.2, 0.7), rtol=1e-14)

    def test_rescaling_relations(self, consts23, cfg23):
        c = consts23
        assert c.A1 ** 2 * cfg23.sum123 / 2 == pytest.approx(c.c123)
        assert c.B == pytest.approx(math.sqrt(cfg23.sum123 * c.c123 / 2))
        assert c.A2 == pytest.approx(2 * c.B / cfg23.sum234)
        assert c.A1 / c.A2 == pytest.approx(cfg23.gamma)
        assert c.lam == pytest.approx(c.c234 * cfg23.gamma / c.c123)

    def test_amplitude_constructor_round_trip(self, consts225):
        again = cc.from_couplings(consts225.config, consts225.c123, consts225.c234, consts225.E1, consts225.E2)
        for k in ("q1", "q2", "A1", "A2", "B", "lam"):
            assert getattr(again, k) == pytest.approx(getattr(consts225, k), rel=1e-12)
        assert consts225.lam == pytest.approx(1.0)

    def test_with_lambda(self, consts23):
        c = cc.with_lambda(consts23, 0.5)
        assert c.lam == 0.5 and c.c234 == pytest.approx(0.5 * c.c123 / c.gamma)

    def test_rejects_zero_coupling(self, cfg23):
        with pytest.raises(ValueError):
            cc.from_couplings(cfg23, 0.0, 0.3, 1.0, 1.0)


class TestSixEquations:
    def test_zero_angles_freeze_superactions(self, consts23):
        d = cc.rhs6([0.3, 0.2, 0.1, 0.05, 0.0, 0.0], consts23)
        assert np.all(d[:4] == 0)

    def test_written_form(self, consts23):
        y = np.array([0.3, 0.2, 0.1, 0.05, 0.4, 1.3])
        a2 = np.array([4, 25, 49, 144])
        s1, s2 = math.sin(0.4), math.sin(1.3)
        c1, c2 = consts23.c123, consts23.c234
        ref = [c1 * s1, c1 * s1 + c2 * s2, -c1 * s1 + c2 * s2, -c2 * s2,
               -0.5 * (a2[0] * y[0] + a2[1] * y[1] - a2[2] * y[2]),
               -0.5 * (a2[1] * y[1] + a2[2] * y[2] - a2[3] * y[3])]
        assert np.allclose(cc.rhs6(y, consts23), ref, rtol=1e-15)

    def test_conservation_along_flow(self, consts225, rng):
        y0 = state6(consts225, rng)
        tr = cc.integrate6(y0, consts225, 200.0, tol=1e-12)
        E1, E2 = cc.first_integrals(tr.states)
        W = cc.weighted_action(tr.states, consts225.config)
        for q in (E1, E2, W):
            assert np.max(np.abs(q - q[0])) <= 1e-9 * abs(q[0])

    def test_complex_form_matches_angles(self, consts225, rng):
        y0 = state6(consts225, rng)
        t = np.linspace(0, 50, 101)
        six = cc.integrate6(y0, consts225, 50.0, tol=1e-12, t_eval=t)
        sz = cc.integrate_sz(cc.six_to_sz(y0, consts225), consts225.config, 50.0, tol=1e-12, t_eval=t)
        assert np.max(np.abs(six.states[:, :4] - sz.states[:, :4])) <= 1e-9
        z1 = sz.states[:, 4] + 1j * sz.states[:, 5]
        z2 = sz.states[:, 6] + 1j * sz.states[:, 7]
        # moduli of the triple products are constant along the truncated flow; they are
        # tiny here, so the solver's absolute tolerance sets the error
        assert np.max(np.abs(np.abs(z1) - consts225.rho123)) <= 1e-12
        assert np.max(np.abs(np.abs(z2) - consts225.rho234)) <= 1e-12

    def test_fd_oracle(self, consts225, rng):
        # the difference stencil amplifies solver error by 1/h; a wrong field shows up at O(1)
        tr = cc.integrate6(state6(consts225, rng), consts225, 20.0, tol=1e-13, t_eval=np.linspace(0, 20, 1001))
        assert cc.fd_residual(tr.t, tr.states, lambda s: cc.rhs6(s, consts225)) < 5e-8

    def test_positivity_record(self, consts225, rng):
        tr = cc.integrate6(state6(consts225, rng), consts225, 5.0, positivity_floor=10.0)
        assert tr.meta["first_nonpositive_time"] == 0.0


class TestCharts:
    def test_four_and_xy_agree_with_six(self, consts225, rng):
        y0 = state6(consts225, rng)
        t = np.linspace(0, 30, 61)
        six = cc.integrate6(y0, consts225, 30.0, tol=1e-13, t_eval=t)
        four = cc.integrate4(cc.reduce6to4(y0), consts225, 30.0, tol=1e-13, t_eval=t)
        xy = cc.integrate_xy(cc.map4toXY(cc.reduce6to4(y0)), consts225, 30.0, tol=1e-13, t_eval=t)
        lifted = cc.lift4to6(four.states, consts225)
        assert np.max(np.abs(lifted[:, :4] - six.states[:, :4])) <= 1e-11
        # the angles wind through hundreds of radians, so compare them relative to their size
        winding = np.max(np.abs(six.states[:, 4:]))
        assert np.max(np.abs(lifted[:, 4:] - six.states[:, 4:])) <= 1e-10 * winding
        back = cc.mapXYto4(xy.states)
        assert np.max(np.abs(back - four.states)) <= 1e-10 * max(winding, 1.0)

    def test_hamiltonian_conserved(self, consts225, rng):
        y0 = cc.map4toXY(cc.reduce6to4(state6(consts225, rng)))
        tr = cc.integrate_xy(y0, consts225, 300.0, tol=1e-13)
        H = cc.hamiltonian_xy(tr.states, consts225)
        assert np.max(np.abs(H - H[0])) <= 1e-7 * abs(H[0])

    def test_hamiltonian_generates_field(self, consts225, rng):
        y = cc.map4toXY(cc.reduce6to4(state6(consts225, rng)))
        h = 1e-6
        grad = np.zeros(4)
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            grad[i] = (cc.hamiltonian_xy(y + e, consts225) - cc.hamiltonian_xy(y - e, consts225)) / (2 * h)
        # x' = dH/dy, y' = -dH/dx
        expected = np.array([grad[2], grad[3], -grad[0], -grad[1]])
        assert np.allclose(cc.rhs_xy(y, consts225), expected, rtol=1e-6, atol=1e-12)

    def test_translation_removes_linear_terms(self, consts225, rng):
        y = cc.map4toXY(cc.reduce6to4(state6(consts225, rng)))
        assert np.allclose(cc.rhs_tilde(cc.translate(y, consts225), consts225), cc.rhs_xy(y, consts225),
                           rtol=1e-12, atol=1e-16)

    def test_rescaled_field_is_pendulum_system(self, consts225, rng):
        y = cc.translate(cc.map4toXY(cc.reduce6to4(state6(consts225, rng))), consts225)
        lhs = cc.rescale(cc.rhs_tilde(y, consts225)[None, :] * 0 + y, consts225)
        d_tilde = cc.rhs_tilde(y, consts225)
        # d(xi, eta)/ds with s = B t
        d = np.array([d_tilde[0], d_tilde[2] / consts225.A1, d_tilde[1], d_tilde[3] / consts225.A2]) / consts225.B
        ref = cc.rhs_xieta(lhs[0], consts225.mu1, consts225.mu2, consts225.lam)
        assert np.allclose(d, ref, rtol=1e-11, atol=1e-13)

    def test_round_trips(self, consts225, rng):
        for _ in range(50):
            y = state6(consts225, rng)
            back = cc.xieta_to_six(cc.six_to_xieta(y, consts225), consts225)
            assert np.max(np.abs(back - y) / np.maximum(np.abs(y), 1.0)) <= 1e-13
            x = rng.normal(size=4)
            assert np.allclose(cc.six_to_xieta(cc.xieta_to_six(x, consts225), consts225), x, rtol=1e-13, atol=1e-13)
            assert np.allclose(cc.mapXYto4(cc.map4toXY(y[2:])), y[2:], rtol=0, atol=1e-15)
            assert np.allclose(cc.untranslate(cc.translate(x, consts225), consts225), x, rtol=0, atol=1e-15)

    @settings(max_examples=100)
    @given(st.lists(st.floats(-10, 10), min_size=4, max_size=4))
    def test_round_trip_property(self, x):
        consts = cc.from_amplitudes(rc.make_config(2, 3), A1=0.01, q1=0.2, q2=0.1)
        x = np.array(x)
        back = cc.six_to_xieta(cc.xieta_to_six(x, consts), consts)
        assert np.allclose(back, x, rtol=1e-12, atol=1e-12)

    def test_batch_shapes(self, consts225, rng):
        Y = np.array([state6(consts225, rng) for _ in range(5)])
        assert cc.six_to_xieta(Y, consts225).shape == (5, 4)
        assert cc.rhs6(Y, consts225).shape == (5, 6)


class TestPendulumSystem:
    def test_uncoupled_energies(self):
        y0 = [0.2, 1.0, 2.0, 0.4]
        tr = cc.integrate_xieta(y0, 0.0, 0.0, 60.0, tol=1e-12)
        xi1, eta1, xi2, eta2 = tr.states.T
        for h in (cc.pendulum_energy(xi1, eta1), cc.pendulum_energy(xi2, eta2)):
            assert np.max(np.abs(h - h[0])) <= 1e-10

    @pytest.mark.parametrize("sigma", [0.02, 0.08, 0.3])
    def test_coupled_energy_conserved(self, sigma):
        mu1, mu2 = rc.couplings(sigma)
        y0 = [0.3, 0.4, 3.0, 0.2]
        tr = cc.integrate_xieta(y0, mu1, mu2, 100.0, tol=1e-12)
        E = cc.coupled_energy(tr.states, sigma)
        assert np.max(np.abs(E - E[0])) <= 1e-10 * max(1.0, abs(E[0]))

    def test_coupled_energy_limit(self):
        # at sigma = 0 the scaled energy is H1 + H2 / 3
        s = np.array([0.3, 0.4, 3.0, 0.2])
        ref = cc.pendulum_energy(0.3, 0.4) + cc.pendulum_energy(3.0, 0.2) / 3
        assert cc.coupled_energy(s, 0.0) == pytest.approx(ref, rel=1e-15)

    def test_reversibility(self):
        mu1, mu2 = rc.couplings(0.08)
        y0 = np.array([0.3, 0.4, 3.0, 0.2])
        fwd = cc.integrate_xieta(y0, mu1, mu2, 15.0, tol=1e-13).states[-1]
        flip = lambda y: np.array([-y[0], y[1], -y[2], y[3]])
        back = cc.integrate_xieta(flip(y0), mu1, mu2, -15.0, tol=1e-13).states[-1]
        assert np.max(np.abs(back - flip(fwd))) <= 1e-9


class TestChainComposition:
    def test_rest_state(self, consts225):
        tr = cc.integrate_xieta(np.zeros(4), consts225.mu1, consts225.mu2, 10.0)
        six = cc.compose_chain(tr, consts225)
        c = consts225
        ref = [c.E1 - c.q1, c.E2 - c.q1 - c.q2, c.q1 - c.q2, c.q2]
        assert np.allclose(six.states[:, :4], ref, rtol=1e-14, atol=0)
        assert six.t[-1] == pytest.approx(10.0 / c.B)

    def test_against_six_equations(self, consts225):
        x0 = np.array([0.0, 0.5, 3.0, 1.5])
        s = np.linspace(0.0, 8.0, 81)
        tr = cc.integrate_xieta(x0, consts225.mu1, consts225.mu2, 8.0, tol=1e-13, lam=consts225.lam, t_eval=s)
        chain = cc.compose_chain(tr, consts225)
        direct = cc.integrate6(cc.xieta_to_six(x0, consts225), consts225, 8.0 / consts225.B, tol=1e-13,
                               t_eval=s / consts225.B)
        scale = np.max(np.abs(direct.states[:, :4]))
        assert np.max(np.abs(chain.states[:, :4] - direct.states[:, :4])) <= 1e-9 * scale
        dphi = np.angle(np.exp(1j * (chain.states[:, 4:] - direct.states[:, 4:])))
        assert np.max(np.abs(dphi)) <= 1e-8

    def test_scaled_form(self, cfg225):
        eps = 0.05
        consts = cc.from_amplitudes(cfg225, 0.02 * eps**3, 1.3 * eps**2, eps**2)
        sf = cc.scaled_form(consts, eps)
        assert sf.s[3] == pytest.approx(1.0)
        assert sf.a1 == pytest.approx(0.02)
        assert sf.b == pytest.approx(consts.B / eps**3)
