import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kirchhoff_chaos import horseshoe as hs
from kirchhoff_chaos.cascade import coupled_energy

states = st.tuples(st.floats(-3, 3), st.floats(-2, 2), st.floats(-3, 3), st.floats(-2, 2))


@pytest.fixture(scope="module")
def orbit0(a0):
    return hs.continue_periodic_orbit(0.0, a0)


class TestFlow:
    @settings(max_examples=25, deadline=None)
    @given(states, st.floats(0.1, 6.0), st.floats(0.0, 0.3))
    def test_reversible(self, y, t, sigma):
        fwd = hs.flow(np.array(y), t, sigma).y_final
        back = hs.flow(hs.involution(np.array(y)), -t, sigma).y_final
        assert np.max(np.abs(hs.involution(back) - fwd)) <= 1e-9

    @settings(max_examples=25, deadline=None)
    @given(states, st.floats(0.0, 0.3))
    def test_energy_conserved(self, y, sigma):
        sol = hs.flow(np.array(y), 20.0, sigma, t_eval=np.linspace(0, 20, 21))
        e = coupled_energy(sol.y, sigma)
        assert np.max(np.abs(e - e[0])) <= 1e-10 * max(1.0, abs(e[0]))

    @given(states, st.floats(0.0, 0.5))
    def test_divergence_free(self, y, sigma):
        assert hs.divergence(np.array(y), sigma) == 0.0

    def test_vector_field_rows(self):
        Y = np.array([[0.1, 0.2, 0.3, 0.4], [1.0, -1.0, 2.0, 0.5]])
        f = hs.vector_field(Y, 0.1)
        assert f.shape == (2, 4)
        assert np.allclose(f[0], hs.vector_field(Y[0], 0.1))
        assert f[0, 1] == pytest.approx(-math.sin(0.1))


class TestPeriodicOrbit:
    def test_uncoupled_multipliers(self, orbit0):
        e = math.exp(orbit0.T)
        mults = np.sort(np.abs(orbit0.multipliers))
        assert mults[0] == pytest.approx(1 / e, rel=1e-7)
        assert mults[3] == pytest.approx(e, rel=1e-7)
        # the libration contributes a Jordan block, whose eigenvalues carry sqrt(eps) error
        assert np.allclose(mults[1:3], 1.0, atol=1e-6)
        assert orbit0.det_monodromy == pytest.approx(1.0, abs=1e-9)
        assert orbit0.trace_integral == 0.0

    def test_coupled_orbit(self, orbit05):
        assert orbit05.periodicity_residual <= 1e-9
        assert orbit05.reversibility_residual <= 1e-9
        assert orbit05.c1_distance <= 0.5
        assert int(np.sum(np.abs(orbit05.multipliers) > 1.05)) == 1
        assert orbit05.det_monodromy == pytest.approx(1.0, abs=1e-9)
        assert orbit05.newton_history[-1] <= 1e-13

    def test_interpolant_follows_flow(self, orbit05):
        t = np.linspace(0.0, orbit05.T, 17)
        sol = hs.flow(orbit05.y0, orbit05.T, 0.05, t_eval=t)
        assert np.max(np.abs(orbit05(t) - sol.y)) <= 1e-9

    def test_unstable_eigenvector(self, orbit05):
        mu = orbit05.unstable_multiplier
        v = orbit05.v_unstable
        assert np.linalg.norm(orbit05.monodromy @ v - mu * v) <= 1e-8 * mu

    def test_transported_directions(self, orbit05):
        pts, dirs = orbit05.transport([0.0, 1.0, 3.0])
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
        assert np.all(dirs[:, 3] > 0)
        assert np.allclose(pts, orbit05([0.0, 1.0, 3.0]), atol=1e-9)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            hs.continue_periodic_orbit(-0.1)

    def test_serializable(self, orbit05):
        d = orbit05.to_dict()
        assert d["sigma"] == 0.05 and len(d["multipliers"]) == 4


class TestSection:
    def test_symbols(self):
        assert list(hs.extract_symbols([0.0, 23.1], 7.4163)) == [3]
        assert list(hs.extract_symbols([0.0, 7.0, 20.0, 20.5], 7.0)) == [1, 1, 0]

    def test_section_point_on_level(self, orbit05):
        pt = hs.section_point_from_energy(0.2, 0.1, orbit05)
        assert pt.eta2 > 0
        assert coupled_energy(pt.state(), 0.05) == pytest.approx(orbit05.energy, abs=1e-13)

    def test_unreachable_level(self, orbit05):
        with pytest.raises(ValueError):
            hs.section_eta2(0.0, 3.0, -5.0, 0.05)

    def test_return_map_lands_on_section(self, orbit05, itinerary05):
        pt = hs.SectionPoint(*itinerary05.start[:2], itinerary05.start[3])
        nxt, t = hs.poincare_map(pt, 0.05)
        assert nxt is not None and t > 0
        assert nxt.eta2 > 0
        assert abs(nxt.state()[2] - 2 * math.pi * nxt.xi2_turns) == 0.0
        assert coupled_energy(nxt.state(), 0.05) == pytest.approx(orbit05.energy, abs=1e-10)
        assert t == pytest.approx(itinerary05.section_times[1] - itinerary05.section_times[0], abs=1e-8)


class TestTransversality:
    def test_uncoupled_gap_vanishes(self, orbit0):
        assert abs(hs.manifold_distance(0.3, 0.0, orbit0)) <= 1e-10

    def test_zero_near_origin(self, transversality05):
        assert abs(transversality05.tau_star) <= 1e-6

    def test_slope_against_first_order(self, transversality05):
        c = transversality05
        assert c.melnikov_slope == pytest.approx(4 / 9, abs=1e-6)
        assert c.gap_slope < 0
        assert 0.9 <= c.slope_ratio <= 1.1
        assert c.literal_slope_ratio == pytest.approx(-c.slope_ratio)

    def test_gap_is_odd_and_close_to_first_order(self, transversality05):
        g = np.array(transversality05.gaps)
        first = np.array(transversality05.first_order)
        assert np.allclose(g, -g[::-1], rtol=1e-7)
        assert np.all(np.abs(g - first) <= 0.1 * np.abs(first))

    def test_discrepancy_is_higher_order(self):
        slope, errs = hs.discrepancy_exponent()
        assert slope > 1.5
        assert errs == sorted(errs)


class TestItinerary:
    def test_prescribed_symbols_realized(self, itinerary05):
        assert itinerary05.M0 == 0
        assert itinerary05.prescribed == [1, 3, 2]
        assert itinerary05.matches

    def test_crossing_structure(self, itinerary05):
        it = itinerary05
        assert it.eta2_band_constant <= 10.0
        assert all(0.0 <= th < 1.0 for th in it.theta_j)
        assert it.t_j[0] == 0.0
        assert len(it.t_bar_j) >= len(it.prescribed)
        assert all(u < d < v for u, d, v in zip(it.t_j, it.t_bar_j, it.t_j[1:]))

    def test_samples_reproduce_start(self, itinerary05):
        s = np.array([-itinerary05.t_start, 0.0])
        y = hs.itinerary_samples(itinerary05, s)
        assert np.allclose(y[0], itinerary05.start, atol=1e-12)
        assert y[1, 3] == pytest.approx(1.0, abs=1e-9)

    def test_json(self, itinerary05, tmp_path):
        itinerary05.write_json(tmp_path / "it.json")
        import json
        d = json.loads((tmp_path / "it.json").read_text())
        assert d["symbols_realized"][:3] == [1, 3, 2]
