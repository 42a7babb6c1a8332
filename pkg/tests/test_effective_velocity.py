"""Pressure law, potential field v, effective velocity and the two momentum forms."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critflow import (Field, FluidState, Grid, PressureLaw, SplitMix64, VacuumApproach, ViscosityParams,
                      compute_v, from_effective, random_field, to_effective)
from critflow.effective_velocity import (dpressure, dt_v_source, du_dt, momentum_residual, momentum_terms,
                                         pressure)
from critflow.spectral_core import (divergence, gradient, lame_operator, laplacian,
                                    longitudinal_projection, multiply)

VISC = ViscosityParams(1.0, 0.5)


def random_state(g, seed, gamma=1.4, amp=0.3, uamp=0.5, K=1.0):
    rng = SplitMix64(seed)
    r = random_field(g, rng, mean_free=True, kmax=8.0)
    rho = 1.0 + amp * r / r.sup()
    u = random_field(g, rng, ncomp=g.dim, kmax=8.0) * uamp
    return FluidState(rho, u, VISC, PressureLaw(K=K, gamma=gamma))


class TestPressureLaw:
    def test_equilibrium_zero(self):
        law = PressureLaw(2.0, 1.4, 1.3)
        assert law.P(1.3) - law.P(law.rho_bar) == 0

    def test_isothermal_derivative(self):
        law = PressureLaw(3.0, 1.0)
        np.testing.assert_array_equal(law.dP(np.array([0.5, 1.0, 2.0])), 3.0)

    def test_gamma_law_pointwise(self, grid32):
        law = PressureLaw(1.0, 1.4)
        rho = Field.from_function(grid32, lambda x, y: 1 + 0.1 * np.sin(x))
        st_ = FluidState(rho, Field.zeros(grid32, 2), law=law)
        expected = np.array([float(r) ** 1.4 for r in rho.data.ravel()]).reshape(rho.data.shape)
        np.testing.assert_allclose(pressure(st_).data, expected, rtol=1e-14, atol=0)
        np.testing.assert_allclose(dpressure(st_).data, 1.4 * rho.data**0.4, rtol=1e-14)

    @pytest.mark.parametrize("kw", [dict(K=0.0), dict(gamma=0.5), dict(rho_bar=-1.0)])
    def test_rejects_bad_parameters(self, kw):
        with pytest.raises(ValueError):
            PressureLaw(**kw)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.05, 5.0), st.sampled_from([1.0, 1.4, 2.0]))
    def test_potential_nonnegative_and_zero_at_rest(self, rho, gamma):
        law = PressureLaw(1.0, gamma)
        assert law.potential(rho) >= -1e-14
        assert law.potential(1.0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("gamma", [1.0, 1.4])
    def test_potential_derivative(self, gamma):
        # d/drho (Pi / rho) = (P(rho) - P(rho_bar)) / rho^2
        law = PressureLaw(1.0, gamma)
        r, h = 1.7, 1e-5
        d = (law.potential(r + h) / (r + h) - law.potential(r - h) / (r - h)) / (2 * h)
        assert d == pytest.approx((law.P(r) - law.P(1.0)) / r**2, rel=1e-8)


class TestFluidState:
    def test_vacuum_rejected(self, grid32):
        rho = Field.from_function(grid32, lambda x, y: np.cos(x))
        with pytest.raises(VacuumApproach):
            FluidState(rho, Field.zeros(grid32, 2))

    def test_shape_checks(self, grid32):
        with pytest.raises(ValueError):
            FluidState(Field.constant(grid32, 1.0), Field.zeros(grid32, 1))

    def test_a_definition(self, grid32):
        s = random_state(grid32, 1)
        np.testing.assert_allclose(s.a.data, 1 / s.rho.data - 1)


class TestPotentialField:
    def test_equilibrium_v_zero(self, grid32):
        s = FluidState(Field.constant(grid32, 1.0), Field.zeros(grid32, 2))
        assert np.all(compute_v(s).data == 0)

    def test_single_mode_inversion(self):
        # P(rho) - P(1) = sin(3x) for the isothermal law with K = 1
        g = Grid(2, 32)
        rho = Field.from_function(g, lambda x, y: 1 + 0.5 * np.sin(3 * x))
        s = FluidState(rho, Field.zeros(g, 2), law=PressureLaw(1.0, 1.0))
        x, _ = g.coords
        expected = np.stack([-0.5 * np.cos(3 * x) / 3, np.zeros(g.shape)])
        np.testing.assert_allclose(s.v.data, expected, atol=1e-14)

    @pytest.mark.parametrize("gamma", [1.0, 1.4])
    def test_laplacian_identity(self, grid64, gamma):
        s = random_state(grid64, 3, gamma)
        gp = gradient(pressure(s))
        assert (laplacian(s.v) - gp).sup() / gp.sup() < 1e-10

    @pytest.mark.parametrize("gamma", [1.0, 1.4])
    def test_pressure_cancellation(self, grid64, gamma):
        s = random_state(grid64, 4, gamma)
        inv_rho = Field(grid64, 1 / s.rho.data)
        lhs = multiply(inv_rho, lame_operator(s.v / VISC.nu, VISC), dealias=False)
        rhs = multiply(inv_rho, gradient(pressure(s)), dealias=False)
        assert (lhs - rhs).sup() < 1e-9 * rhs.sup()


class TestEffectiveVelocity:
    def test_equilibrium_v1_is_u(self, grid32):
        u = random_field(grid32, SplitMix64(5), ncomp=2)
        s = FluidState(Field.constant(grid32, 1.0), u)
        np.testing.assert_array_equal(s.v1.data, u.data)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**40), st.sampled_from([1.0, 1.4]))
    def test_round_trip(self, seed, gamma):
        g = Grid(2, 32)
        s = random_state(g, seed, gamma)
        back = from_effective(to_effective(s), s.rho, s.visc, s.law)
        assert (back - s.u).sup() < 1e-13

    def test_from_effective_constructor(self, grid32):
        s = random_state(grid32, 6)
        s2 = FluidState.from_effective(s.rho, s.v1, s.visc, s.law)
        assert (s2.u - s.u).sup() < 1e-13


class TestSource:
    def test_zero_velocity(self, grid32):
        s = random_state(grid32, 7, uamp=0.0)
        assert dt_v_source(s).sup() == 0

    def test_isothermal_is_projection(self, grid64):
        s = random_state(grid64, 8, gamma=1.0, K=2.0)
        generic = -_generic_source(s)
        proj = -2.0 * longitudinal_projection(multiply(s.rho, s.u))
        assert (dt_v_source(s) - proj).sup() < 1e-10 * proj.sup()
        assert (generic - proj).sup() < 1e-10 * proj.sup()

    @pytest.mark.parametrize("gamma", [1.0, 1.4])
    def test_time_derivative_oracle(self, gamma):
        # advance rho by one explicit mass step and compare v(t + h) with v + h dv/dt
        g = Grid(2, 32)
        s = random_state(g, 9, gamma, amp=0.2)
        src = dt_v_source(s, dealias=False)
        errs = []
        for h in (1e-3, 5e-4, 2.5e-4):
            flux = divergence(multiply(s.rho, s.u, dealias=False))
            s2 = FluidState(s.rho - flux * h, s.u, s.visc, s.law)
            errs.append((s2.v - s.v - src * h).sup())
        if gamma == 1.0:
            # linear law: v is linear in rho, so the step is exact up to round-off
            assert max(errs) < 1e-13 * src.sup()
        else:
            order = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
            assert min(order) > 1.8


def _generic_source(s):
    """grad lap^{-1}(P' div(rho u)) without the isothermal shortcut."""
    g = s.grid
    dp = Field(g, s.law.dP(s.rho.data))
    q = multiply(dp, divergence(multiply(s.rho, s.u)))
    phi = g.inv_k2 * q.hat[0]
    return Field.from_spectral(g, np.stack([1j * k * phi for k in g.k]))


class TestMomentumForms:
    @pytest.mark.parametrize("form", ["original", "effective"])
    def test_equilibrium_residual_zero(self, grid32, form):
        s = FluidState(Field.constant(grid32, 1.0), Field.zeros(grid32, 2))
        assert momentum_residual(s, form).sup() == 0

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**40), st.sampled_from([1.0, 1.4]))
    def test_formulations_agree(self, seed, gamma):
        g = Grid(2, 32)
        s = random_state(g, seed, gamma)
        a, b = du_dt(s, "original"), du_dt(s, "effective")
        assert (a - b).sup() < 1e-9 * a.sup()

    def test_forcing_enters_both(self, grid32):
        s = random_state(grid32, 10)
        f = random_field(grid32, SplitMix64(11), ncomp=2)
        for form in ("original", "effective"):
            diff = du_dt(s, form, f) - du_dt(s, form)
            assert (diff - f).sup() < 1e-12

    def test_effective_form_has_no_pressure_gradient(self, grid32):
        # toggling the pressure law changes the effective right-hand side only through the source term
        s1 = random_state(grid32, 12, gamma=1.4, K=1.0)
        s2 = FluidState(s1.rho, s1.u, s1.visc, PressureLaw(K=3.0, gamma=1.4))
        fixed_v1 = s1.v1
        terms = []
        for s in (s1, s2):
            sv = FluidState.from_effective(s.rho, fixed_v1, s.visc, s.law)
            terms.append(momentum_terms(sv, "effective"))
        # viscous term depends only on (rho, v1)
        assert (terms[0]["viscous"] - terms[1]["viscous"]).sup() < 1e-13
        assert "pressure" not in terms[0]
        without = momentum_terms(s1, "effective", include_pressure=False)
        assert set(without) == {"convection", "viscous", "forcing"}

    def test_original_form_pressure_term(self, grid32):
        s = random_state(grid32, 13)
        t = momentum_terms(s, "original")
        expected = -multiply(Field(grid32, 1 / s.rho.data), gradient(pressure(s)))
        assert (t["pressure"] - expected).sup() < 1e-14

    def test_unknown_form(self, grid32):
        with pytest.raises(ValueError):
            momentum_terms(random_state(grid32, 1), "other")
