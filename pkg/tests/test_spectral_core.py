"""Grid, fields, spectral operators and snapshot I/O."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critflow import Field, Grid, GridError, SplitMix64, TimeSeries, ViscosityParams, random_field
from critflow.errors import EmptySeries
from critflow.spectral_core import (advect, dealias, divergence, gradient, inv_laplacian_mean_free,
                                    lame_operator, laplacian, load_field, longitudinal_projection,
                                    lp_norm, multiply, save_field, transform)


class TestGrid:
    @pytest.mark.parametrize("dim,n", [(2, 8), (2, 64), (3, 16)])
    def test_shapes(self, dim, n):
        g = Grid(dim, n)
        assert g.shape == (n,) * dim
        assert g.spectral_shape == (n,) * (dim - 1) + (n // 2 + 1,)
        assert g.volume == pytest.approx((2 * np.pi) ** dim)

    @pytest.mark.parametrize("dim,n", [(1, 8), (4, 8), (2, 6), (2, 4), (2, 100)])
    def test_rejects_bad_geometry(self, dim, n):
        with pytest.raises(GridError):
            Grid(dim, n)

    def test_nyquist_zeroed_in_derivative_wavenumbers(self):
        g = Grid(2, 16)
        assert np.all(np.abs(g.k[0]) < 8)
        assert np.abs(g.k_true[0]).max() == 8

    def test_dealias_mask_two_thirds(self):
        g = Grid(2, 64)
        kept = np.abs(np.stack(np.broadcast_arrays(*g.k_true))).max(axis=0)[g.dealias_mask]
        assert kept.max() <= 64 // 3
        assert not g.dealias_mask[0, 64 // 3 + 1]


class TestViscosity:
    @pytest.mark.parametrize("mu,lam", [(0.0, 0.0), (-1.0, 0.0), (1.0, -2.5)])
    def test_ellipticity(self, mu, lam):
        with pytest.raises(ValueError):
            ViscosityParams(mu, lam)

    def test_nu(self):
        assert ViscosityParams(1.0, 0.5).nu == pytest.approx(2.5)


class TestTransforms:
    def test_round_trip(self, grid32, rng):
        f = random_field(grid32, rng, ncomp=2)
        back = transform(transform(f), "inverse", grid32)
        np.testing.assert_allclose(back.data, f.data, atol=1e-14)

    def test_single_mode_coefficient(self):
        g = Grid(2, 16)
        f = Field.from_function(g, lambda x, y: np.cos(3 * y))
        hat = f.hat[0]
        assert np.count_nonzero(np.abs(hat) > 1e-12) == 1
        assert np.abs(hat).max() == pytest.approx(0.5)


class TestOperators:
    def test_gradient_of_sine(self):
        g = Grid(2, 32)
        f = Field.from_function(g, lambda x, y: np.sin(2 * x) * np.cos(y))
        x, y = g.coords
        exact = np.stack([2 * np.cos(2 * x) * np.cos(y), -np.sin(2 * x) * np.sin(y)])
        np.testing.assert_allclose(gradient(f).data, exact, atol=1e-12)

    def test_laplacian_eigenvalue(self):
        g = Grid(2, 32)
        f = Field.from_function(g, lambda x, y: np.sin(3 * x + 4 * y))
        np.testing.assert_allclose(laplacian(f).data, -25 * f.data, atol=1e-11)

    def test_inverse_laplacian_mean_free(self, grid32, rng):
        f = random_field(grid32, rng, mean_free=True)
        np.testing.assert_allclose(laplacian(inv_laplacian_mean_free(f)).data, f.data, atol=1e-12)

    def test_div_grad_is_laplacian(self, grid32, rng):
        f = random_field(grid32, rng)
        np.testing.assert_allclose(divergence(gradient(f)).data, laplacian(f).data, atol=1e-11)

    @pytest.mark.parametrize("mu,lam", [(1.0, 0.0), (0.5, 2.0), (1.0, -0.5)])
    def test_lame_splits_into_helmholtz_parts(self, grid32, rng, mu, lam):
        u = random_field(grid32, rng, ncomp=2, mean_free=True)
        Au = lame_operator(u, ViscosityParams(mu, lam))
        expected = mu * laplacian(u) + (lam + mu) * gradient(divergence(u))
        np.testing.assert_allclose(Au.data, expected.data, atol=1e-11)

    def test_longitudinal_projection_idempotent(self, grid32, rng):
        u = random_field(grid32, rng, ncomp=2)
        Pu = longitudinal_projection(u)
        np.testing.assert_allclose(longitudinal_projection(Pu).data, Pu.data, atol=1e-13)
        np.testing.assert_allclose(divergence(u - Pu).data, 0, atol=1e-12)

    def test_dealiased_product_exact_for_band_limited(self):
        g = Grid(2, 32)
        f = Field.from_function(g, lambda x, y: np.cos(4 * x))
        h = Field.from_function(g, lambda x, y: np.sin(5 * y))
        np.testing.assert_allclose(multiply(f, h).data, f.data * h.data, atol=1e-13)

    def test_dealias_removes_high_modes(self):
        g = Grid(2, 32)
        f = Field.from_function(g, lambda x, y: np.cos(15 * x))
        np.testing.assert_allclose(dealias(f).data, 0, atol=1e-14)

    def test_advect_constant_velocity(self):
        g = Grid(2, 32)
        v = Field.constant(g, 1.0, ncomp=2)
        a = Field.from_function(g, lambda x, y: np.sin(x + 2 * y))
        x, y = g.coords
        np.testing.assert_allclose(advect(v, a).data[0], 3 * np.cos(x + 2 * y), atol=1e-12)


class TestNorms:
    def test_l2_norm_of_sine(self):
        g = Grid(2, 32)
        f = Field.from_function(g, lambda x, y: np.sin(x))
        assert lp_norm(f, 2) == pytest.approx(np.sqrt(2 * np.pi**2))

    def test_linf(self):
        g = Grid(2, 32)
        f = Field.from_function(g, lambda x, y: 3 * np.cos(y))
        assert lp_norm(f, np.inf) == pytest.approx(3.0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32), st.floats(1.0, 6.0))
    def test_holder_ordering_on_unit_measure(self, seed, p):
        g = Grid(2, 16)
        f = random_field(g, SplitMix64(seed))
        vol = g.volume
        # ||f||_p / vol^{1/p} is nondecreasing in p
        assert lp_norm(f, p) / vol ** (1 / p) <= lp_norm(f, 2 * p) / vol ** (1 / (2 * p)) * (1 + 1e-12)


class TestTimeSeries:
    def test_empty_rejected(self):
        with pytest.raises(EmptySeries):
            TimeSeries(np.array([]), ())

    def test_final_and_at(self, grid32):
        fs = tuple(Field.constant(grid32, float(i)) for i in range(3))
        ts = TimeSeries(np.array([0.0, 0.5, 1.0]), fs)
        assert ts.final.data.mean() == 2.0
        assert ts.at(0.5).data.mean() == 1.0


class TestSnapshots:
    @pytest.mark.parametrize("dim,n,ncomp", [(2, 16, 1), (2, 16, 2), (3, 8, 3)])
    def test_round_trip(self, tmp_path, dim, n, ncomp):
        g = Grid(dim, n)
        f = random_field(g, SplitMix64(7), ncomp=ncomp)
        save_field(f, tmp_path / "f.bin")
        back = load_field(tmp_path / "f.bin")
        assert back.grid == g
        np.testing.assert_array_equal(back.data, f.data)

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"not a snapshot at all")
        with pytest.raises(ValueError):
            load_field(tmp_path / "x.bin")
