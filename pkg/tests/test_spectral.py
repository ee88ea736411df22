import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kirchhoff_chaos import resonant as rc
from kirchhoff_chaos import spectral as sp
from kirchhoff_chaos.resonant import CONJUGATE_PAIR, PHYSICAL, SpectralField

SUPPORT = (2, 5, 7, 12, -2, -5, -7, -12)


def random_physical(rng, scale=0.05, support=SUPPORT):
    n = len(support) // 2
    u = scale * (rng.normal(size=n) + 1j * rng.normal(size=n))
    v = scale * (rng.normal(size=n) + 1j * rng.normal(size=n))
    return sp.PhysicalState(SpectralField(support, np.concatenate([u, np.conj(u)]), PHYSICAL),
                            SpectralField(support, np.concatenate([v, np.conj(v)]), PHYSICAL))


def random_pair(rng, scale=1.0):
    return SpectralField(SUPPORT, scale * (rng.normal(size=8) + 1j * rng.normal(size=8)), CONJUGATE_PAIR)


def superaction_rhs(B, alphas):
    """Right side of the superaction equations written from the two triple products."""
    a1, a2, a3, a4 = alphas
    t123 = np.imag(B[0] * B[1] * np.conj(B[2])) * a1 * a2 * a3
    t234 = np.imag(B[1] * B[2] * np.conj(B[3])) * a2 * a3 * a4
    return 0.375 * np.array([t123, t123 + t234, -t123 + t234, -t234])


def z5_products(u, ks):
    """Quintic operator summed term by term as written, with plain complex products."""
    n = len(ks)
    part = lambda i: (i + n // 2) % n
    v = np.array([np.conj(u[part(i)]) for i in range(n)])
    bu = u * u[[part(i) for i in range(n)]]
    bv = v * v[[part(i) for i in range(n)]]
    out = np.zeros(n, complex)
    for ik in range(n):
        k = abs(ks[ik])
        acc = 0j
        for ij in range(n):
            j = abs(ks[ij])
            for il in range(n):
                l = abs(ks[il])
                if j == l:
                    c = 1 / (j + k) - (1 / (l - k) if l != k else 0.0)
                    acc += bu[ij] * bv[il] * u[ik] * j * j * l * l * c / 32
                if k == j + l:
                    acc += 3 / 32 * bu[ij] * bu[il] * v[ik] * j * l * k
                if j == k:
                    c = 6 + l / (l + j) + (l / (l - j) if l != j else 0.0)
                    acc += bu[ij] * u[il] * v[part(il)] * v[ik] * j * j * l * c / 16
                if k == j - l:
                    acc += 3 / 16 * bu[ij] * bv[il] * v[ik] * j * l * k
        out[ik] = 1j * acc
    return out


def single_mode(eps, alpha=2):
    u = np.zeros(8, complex)
    u[0] = u[4] = eps / 2
    return sp.PhysicalState(SpectralField(SUPPORT, u, PHYSICAL), SpectralField.zeros(SUPPORT, PHYSICAL))


class TestKirchhoffField:
    def test_zero_state(self):
        st0 = sp.PhysicalState(SpectralField.zeros(SUPPORT, PHYSICAL), SpectralField.zeros(SUPPORT, PHYSICAL))
        du, dv = sp.kirchhoff_rhs(st0)
        assert np.all(du.coeffs == 0) and np.all(dv.coeffs == 0)
        assert sp.kirchhoff_energy(st0) == 0.0

    def test_single_mode(self):
        eps = 0.3
        state = single_mode(eps)
        G = 2 * 2**2 * (eps / 2) ** 2
        assert sp.g_value(state) == pytest.approx(G, rel=1e-15)
        _, dv = sp.kirchhoff_rhs(state)
        assert dv.coefficient(2) == pytest.approx(-(2**2) * (1 + G) * eps / 2, rel=1e-15)
        assert sp.kirchhoff_energy(state) == pytest.approx(G / 2 + G**2 / 4, rel=1e-15)

    def test_weight_scales_nonlinearity(self):
        state = single_mode(0.3)
        w = (2 * math.pi)
        assert sp.g_value(state, w) == pytest.approx(w * sp.g_value(state))

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1))
    def test_energy_is_first_integral(self, seed):
        state = random_physical(np.random.default_rng(seed), 0.3)
        du, dv = sp.kirchhoff_rhs(state)
        k2 = state.u.freqs**2
        grad = np.sum(k2 * np.abs(state.u.coeffs) ** 2)
        # dE = Re sum conj(v) dv + (1 + grad) k^2 Re conj(u) du
        dE = np.sum(np.real(np.conj(state.v.coeffs) * dv.coeffs)) + \
            (1 + grad) * np.sum(k2 * np.real(np.conj(state.u.coeffs) * du.coeffs))
        scale = np.sum(np.abs(state.v.coeffs) * np.abs(dv.coeffs))
        assert abs(dE) <= 1e-13 * scale

    def test_pack_round_trip(self, rng):
        state = random_physical(rng)
        back = sp.unpack_physical(sp.pack_physical(state), SUPPORT)
        assert np.array_equal(back.u.coeffs, state.u.coeffs)
        assert np.array_equal(back.v.coeffs, state.v.coeffs)

    def test_rejects_mixed_flavors(self, rng):
        with pytest.raises(ValueError):
            sp.PhysicalState(random_pair(rng), random_pair(rng))


class TestIntegration:
    def test_energy_drift(self):
        u = 0.2 * np.array([1.0, 0.5, 0.3, 0.2]) * np.exp(1j * np.array([0.1, 0.7, 1.9, 2.3]))
        state = sp.PhysicalState(SpectralField(SUPPORT, np.concatenate([u, np.conj(u)]), PHYSICAL),
                                 SpectralField.zeros(SUPPORT, PHYSICAL))
        run = sp.integrate_kirchhoff(state, 120.0, tol=1e-11)
        assert run.stats["accepted"] >= 10_000
        e = run.series()["energy"]
        assert np.max(np.abs(e - e[0])) / e[0] <= 1e-9

    def test_support_is_invariant_and_real(self, rng):
        run = sp.integrate_kirchhoff(random_physical(rng), 5.0)
        fin = run.final_state()
        assert fin.u.flavor == PHYSICAL
        assert np.allclose(run.u[:, 4:], np.conj(run.u[:, :4]))

    def test_linear_flag_matches_closed_form(self):
        u = np.zeros(8, complex)
        u[0], u[4] = 0.3 + 0.1j, 0.3 - 0.1j
        v = np.zeros(8, complex)
        v[0], v[4] = -0.2j, 0.2j
        state = sp.PhysicalState(SpectralField(SUPPORT, u, PHYSICAL), SpectralField(SUPPORT, v, PHYSICAL))
        times = np.linspace(0.0, 20.0, 201)
        run = sp.integrate_kirchhoff(state, 20.0, tol=1e-12, sample_times=times, linearize=True)
        for i in (50, 123, 200):
            ref = sp.linear_wave(state, times[i])
            assert np.max(np.abs(run.u[i] - ref.u.coeffs)) <= 1e-10
            assert np.max(np.abs(run.v[i] - ref.v.coeffs)) <= 1e-10

    def test_single_mode_period(self):
        # one real mode obeys x'' = -k^2 (1 + 2 k^2 x^2) x; its period from amplitude A is
        # 4 int_0^{pi/2} dth / sqrt(k^2 + k^4 A^2 (1 + sin^2 th))
        from scipy import integrate
        k, A = 2.0, 0.1
        period = 4 * integrate.quad(lambda th: 1 / math.sqrt(k * k + k**4 * A * A * (1 + math.sin(th) ** 2)),
                                    0, math.pi / 2, epsabs=0, epsrel=1e-13)[0]
        state = single_mode(2 * A)
        y0 = sp.pack_physical(state)
        from kirchhoff_chaos import _fields, ode
        sol = ode.solve(_fields.KIRCHHOFF, [1.0, 0.0, 2, 5, 7, 12], y0, (0.0, 5.2 * period), rtol=1e-13,
                        atol=1e-16, events=[ode.Crossing(0, 0.0, 0.0, +1)])
        ups = sol.event_t[0]
        assert len(ups) == 5
        assert np.allclose(np.diff(ups), period, rtol=1e-11, atol=0)

    def test_series_norm_identity(self, rng):
        f = random_pair(rng, 0.01)
        u, v = rc.to_physical(f)
        run = sp.integrate_kirchhoff(sp.PhysicalState(u, v), 1.0, sample_times=[0.0])
        s = run.series()
        assert s["calN"][0] == pytest.approx(math.sqrt(2.0) * rc.sobolev_norm(f, 1), rel=1e-13)
        assert s["S1"][0] == pytest.approx(rc.observables(f).S[0], rel=1e-13)

    def test_trajectory_columns(self, rng, tmp_path):
        run = sp.integrate_kirchhoff(random_physical(rng), 1.0, sample_times=np.linspace(0, 1, 11))
        tr = run.to_trajectory()
        assert tr.columns == sp.SERIES_COLUMNS and len(tr) == 11
        tr.to_csv(tmp_path / "x.csv")
        assert (tmp_path / "x.csv").read_text().startswith("# chart=")


class TestResonantModel:
    def test_zero_state(self):
        zero = sp.ResonantState(SpectralField.zeros(SUPPORT))
        for fld in (sp.z3_field, sp.z5_field):
            first, second = fld(zero)
            assert np.all(first.coeffs == 0) and np.all(second.coeffs == 0)

    def test_cubic_part_preserves_superactions(self, rng):
        for _ in range(200):
            u = random_pair(rng, rng.uniform(0.01, 2.0))
            first, _ = sp.z3_field(sp.ResonantState(u))
            rates = sp.superaction_rates(u, first.coeffs)
            scale = np.max(np.abs(first.coeffs)) * np.max(np.abs(u.coeffs))
            assert np.max(np.abs(rates)) <= 1e-15 * scale

    def test_quintic_part_drives_superactions(self, rng):
        for _ in range(200):
            u = random_pair(rng, rng.uniform(0.01, 2.0))
            first, _ = sp.z5_field(sp.ResonantState(u))
            rates = sp.superaction_rates(u, first.coeffs)
            ref = superaction_rhs(rc.observables(u).B, (2, 5, 7, 12))
            assert np.max(np.abs(rates - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_effective_rates_match_written_form(self, rng):
        B = rng.normal(size=4) + 1j * rng.normal(size=4)
        assert np.allclose(sp.effective_rates(B, (2, 5, 7, 12)), superaction_rhs(B, (2, 5, 7, 12)),
                           rtol=1e-14, atol=0)

    def test_second_component_is_conjugate(self, rng):
        u = random_pair(rng)
        first, second = sp.z5_field(sp.ResonantState(u))
        assert np.allclose(second.coeffs, first.conjugate().coeffs)

    def test_quintic_part_matches_product_formula(self, rng):
        for _ in range(20):
            u = random_pair(rng)
            first, _ = sp.z5_field(sp.ResonantState(u))
            ref = z5_products(u.coeffs, np.asarray(SUPPORT, float))
            assert np.max(np.abs(first.coeffs - ref)) <= 1e-14 * np.max(np.abs(ref))

    def test_resonant_flow_follows_superaction_rates(self, rng):
        u = random_pair(rng, 0.3)
        times = np.linspace(0.0, 0.4, 8001)
        _, coeffs = sp.integrate_resonant(sp.ResonantState(u), 0.4, tol=1e-13, sample_times=times)
        S, B = rc.sphere_sums(coeffs)
        rates = np.array([superaction_rhs(b, (2, 5, 7, 12)) for b in B])
        # S(t) - S(0) against the trapezoidal integral of the predicted rates
        integral = np.concatenate([np.zeros((1, 4)), np.cumsum(0.5 * (rates[1:] + rates[:-1]) * np.diff(times)[:, None], axis=0)])
        assert np.max(np.abs(S - S[0] - integral)) <= 1e-4 * np.max(np.abs(integral))
