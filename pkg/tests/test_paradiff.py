"""Paraproducts, remainders, commutators and product-law verifiers."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critflow import Field, Grid, IndexConstraintViolated, SplitMix64, build_filter_bank, random_field
from critflow.littlewood_paley import dyadic_block
from critflow.paradiff import (check_law_constraints, lame_commutator, lame_commutators, paraproduct,
                               remainder, transport_commutator, transport_commutators,
                               verify_lame_commutator, verify_product_laws, verify_self_commutator,
                               verify_transport_commutator)
from critflow.spectral_core import advect, gradient, multiply


class TestBony:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**40))
    def test_decomposition_identity(self, seed):
        g = Grid(2, 32)
        bank = build_filter_bank(g)
        rng = SplitMix64(seed)
        u, v = random_field(g, rng, slope=1.0), random_field(g, rng, slope=1.0)
        err = paraproduct(u, v, bank) + paraproduct(v, u, bank) + remainder(u, v, bank) - multiply(u, v)
        assert np.abs(err.data).max() < 1e-10

    def test_remainder_symmetric(self, grid32, bank32, rng):
        u, v = random_field(grid32, rng), random_field(grid32, rng)
        np.testing.assert_allclose(remainder(u, v, bank32).data, remainder(v, u, bank32).data, atol=1e-13)

    def test_paraproduct_by_constant(self, grid32, bank32, rng):
        # S_{q-1} c = c for q >= 1 and 0 below, so T_c v = c (v - Delta_{-1} v - Delta_0 v)
        v = random_field(grid32, rng, kmax=8.0)
        c = Field.constant(grid32, 3.0)
        expected = 3.0 * (v - dyadic_block(v, -1, bank32) - dyadic_block(v, 0, bank32))
        np.testing.assert_allclose(paraproduct(c, v, bank32).data, expected.data, atol=1e-13)

    def test_paraproduct_of_constant_vanishes(self, grid32, bank32, rng):
        u = random_field(grid32, rng)
        c = Field.constant(grid32, 2.0)
        assert np.abs(paraproduct(u, c, bank32).data).max() < 1e-13

    def test_high_low_modes(self, grid64, bank64):
        # low-frequency u, high-frequency v: the product is the paraproduct T_u v
        u = Field.from_function(grid64, lambda x, y: np.cos(x))
        v = Field.from_function(grid64, lambda x, y: np.cos(12 * y))
        np.testing.assert_allclose(paraproduct(u, v, bank64).data, multiply(u, v).data, atol=1e-13)
        assert np.abs(remainder(u, v, bank64).data).max() < 1e-13


class TestCommutators:
    def test_constant_velocity_transport_commutator_vanishes(self, grid32, bank32, rng):
        v = Field.constant(grid32, [0.3, -1.1], ncomp=2)
        a = random_field(grid32, rng)
        assert np.abs(transport_commutators(v, a, bank32)).max() < 1e-12

    def test_constant_coefficient_lame_commutator_vanishes(self, grid32, bank32, rng):
        a = Field.constant(grid32, 1.7)
        w = random_field(grid32, rng, ncomp=2)
        for k in range(2):
            assert np.abs(lame_commutators(a, w, k, bank32)).max() < 1e-12

    def test_transport_commutator_definition(self, grid32, bank32, rng):
        v = random_field(grid32, rng, ncomp=2, kmax=4.0)
        a = random_field(grid32, rng, kmax=4.0)
        q = 1
        direct = advect(v, dyadic_block(a, q, bank32)) - dyadic_block(advect(v, a), q, bank32)
        np.testing.assert_allclose(transport_commutator(v, a, q, bank32).data, direct.data, atol=1e-12)

    def test_lame_commutator_definition(self, grid32, bank32, rng):
        a = random_field(grid32, rng, kmax=4.0)
        w = random_field(grid32, rng, ncomp=2, kmax=4.0)
        q, k = 2, 1
        dk = lambda f: Field.stack([Field(f.grid, gradient(f.component(i)).data[k:k + 1])  # noqa: E731
                                    for i in range(f.ncomp)])
        direct = dyadic_block(multiply(a, dk(w)), q, bank32) - dk(multiply(a, dyadic_block(w, q, bank32)))
        np.testing.assert_allclose(lame_commutator(a, w, k, q, bank32).data, direct.data, atol=1e-12)

    @pytest.mark.parametrize("q", [-2, 99])
    def test_out_of_range_level_is_zero(self, grid32, bank32, rng, q):
        v = random_field(grid32, rng, ncomp=2)
        assert np.all(transport_commutator(v, v, q, bank32).data == 0)

    def test_bad_axis(self, grid32, bank32, rng):
        with pytest.raises(ValueError):
            lame_commutators(random_field(grid32, rng), random_field(grid32, rng, ncomp=2), 2, bank32)


class TestCommutatorEstimates:
    @pytest.fixture
    def pairs(self, grid32, rng):
        return [(random_field(grid32, rng, ncomp=2), random_field(grid32, rng)) for _ in range(8)]

    def test_transport_constant_moderate(self, pairs, bank32):
        rep = verify_transport_commutator(pairs, bank32)
        assert 0 < rep.constant < 5

    def test_self_constant_moderate(self, grid32, bank32, rng):
        vs = [random_field(grid32, rng, ncomp=2) for _ in range(8)]
        assert 0 < verify_self_commutator(vs, bank32).constant < 5

    def test_lame_constant_moderate(self, grid32, bank32, rng):
        pairs = [(random_field(grid32, rng), random_field(grid32, rng, ncomp=2)) for _ in range(8)]
        assert 0 < verify_lame_commutator(pairs, bank32).constant < 5

    def test_scaling_invariance_of_constant(self, pairs, bank32):
        # both sides are bilinear, so rescaling the inputs leaves the constant fixed
        c1 = verify_transport_commutator(pairs, bank32).constant
        c2 = verify_transport_commutator([(v * 3.0, a * 0.5) for v, a in pairs], bank32).constant
        assert c2 == pytest.approx(c1, rel=1e-10)


class TestProductLaws:
    def test_tame_law(self, grid32, bank32, rng):
        pairs = [(random_field(grid32, rng), random_field(grid32, rng)) for _ in range(8)]
        rep = verify_product_laws(pairs, "tame", bank32, s=1.0, p=2.0, r=1.0)
        assert np.isfinite(rep.constant) and rep.constant < 5

    def test_unknown_law(self):
        with pytest.raises(ValueError):
            check_law_constraints("bogus", 2)

    def test_exponent_below_one(self):
        with pytest.raises(IndexConstraintViolated):
            check_law_constraints("tame", 2, s=1.0, p=0.5)

    def test_holder_rejects_bad_indices(self):
        with pytest.raises(IndexConstraintViolated):
            check_law_constraints("holder", 2, p=1.0, p1=4.0, p2=4.0, lam1=4.0, lam2=4.0, s1=0.5, s2=0.5)
