import numpy as np
import pytest

from nonloc.errors import ConfigError
from nonloc.fieldlab import ComplexField, Grid, integrate, laplacian
from nonloc.ncalgebra import (
    ETA_BOUND_KG2M2S2,
    HBAR_SI,
    NCParams,
    THETA_BOUND_M2,
    angular_momentum_apply,
    nc_kinetic_apply,
    star_apply_local,
    star_product_first_order,
    validate_nc_params,
)
from nonloc.potentials import LocalPotentialSpec, eval_local, local_gradient

from conftest import smooth_random_field


def grid_2d(n=64, L=16.0):
    return Grid(points=(n, n), extent=(L, L))


class TestNCParams:
    def test_commutative_limit(self):
        p = validate_nc_params((0, 0, 0), (0, 0, 0), 1.0)
        assert p.xi == 0.0
        assert p.hbar_eff == 1.0
        assert p.is_commutative

    def test_matrices_antisymmetric(self):
        p = NCParams(theta=(0.2, -0.3, 0.5), eta=(0.1, 0.4, -0.2), hbar=2.0)
        assert np.abs(p.theta_matrix + p.theta_matrix.T).max() == 0.0
        assert np.abs(p.eta_matrix + p.eta_matrix.T).max() == 0.0

    def test_experimental_bounds_give_tiny_xi(self):
        p = validate_nc_params((0, 0, THETA_BOUND_M2), (0, 0, ETA_BOUND_KG2M2S2), HBAR_SI)
        # Direct-arithmetic oracle: Tr(theta_m @ eta_m) = -2 theta.eta for the
        # eps_ijk construction, so xi = -theta.eta / (2 hbar^2).
        expected = -THETA_BOUND_M2 * ETA_BOUND_KG2M2S2 / (2.0 * HBAR_SI ** 2)
        assert p.xi == pytest.approx(expected, rel=1e-12)
        assert abs(p.xi) == pytest.approx(3.2e-33, rel=0.05)
        assert p.hbar_eff == pytest.approx(HBAR_SI, rel=1e-12)

    def test_inconsistent_xi_rejected(self):
        with pytest.raises(ConfigError, match="xi"):
            validate_nc_params((0, 0, 4.0), (0, 0, 1.0), 1.0)

    def test_large_xi_warns(self):
        with pytest.warns(UserWarning, match="xi"):
            validate_nc_params((0, 0, 0.4), (0, 0, 0.2), 1.0)

    def test_dim1_requires_commutative(self):
        with pytest.raises(ConfigError, match="1D"):
            validate_nc_params((0, 0, 0), (0, 0, 0.1), 1.0, dim=1)
        p = validate_nc_params((0, 0, 0), (0, 0, 0), 1.0, dim=1)
        assert p.is_commutative

    def test_dim2_rejects_in_plane(self):
        with pytest.raises(ConfigError, match="z component"):
            validate_nc_params((0.1, 0, 0), (0, 0, 0), 1.0, dim=2)

    def test_hbar_positive(self):
        with pytest.raises(ConfigError, match="hbar"):
            NCParams(hbar=0.0)


class TestStarApplyLocal:
    def test_commutative_limit_exact(self):
        g = grid_2d(32, 8.0)
        V = smooth_random_field(g, 1)
        psi = smooth_random_field(g, 2)
        out = star_apply_local(V, psi, NCParams())
        assert np.abs(out.values - V.values * psi.values).max() == 0.0

    def test_constant_potential_exact(self):
        g = grid_2d(32, 8.0)
        V = ComplexField(g, np.full(g.shape, 1.7 - 0.3j))
        psi = smooth_random_field(g, 3)
        nc = NCParams.z_only(0.3, 0.0)
        out = star_apply_local(V, psi, nc)
        assert np.abs(out.values - V.values * psi.values).max() <= 1e-15

    def test_linear_potential_plane_wave_oracle(self):
        # V = h x, psi = exp(i(kx x + ky y)): the star term adds
        # (i/2) theta (h)(i ky) psi = -(theta h ky / 2) psi.
        g = grid_2d(64, 16.0)
        x, y = g.coordinate_arrays()
        hslope, theta = 2.0, 0.4
        kx = 2 * np.pi * 2 / 16.0
        ky = 2 * np.pi * 3 / 16.0
        psi = ComplexField(g, np.exp(1j * (kx * x + ky * y)) * np.ones(g.shape))
        spec = LocalPotentialSpec(kind="linear", h=hslope)
        V = eval_local(spec, g)
        out = star_apply_local(V, psi, NCParams.z_only(theta, 0.0),
                               grad_v=local_gradient(spec, g))
        expected = (hslope * x - theta * hslope * ky / 2.0) * psi.values
        assert np.abs(out.values - expected).max() <= 1e-10

    def test_1d_grid_rejected_for_nonzero_theta(self):
        g = Grid(points=(32,), extent=(8.0,))
        V = ComplexField(g, np.zeros(32))
        psi = ComplexField(g, np.zeros(32))
        with pytest.raises(ConfigError, match="dim >= 2"):
            star_apply_local(V, psi, NCParams.z_only(0.1, 0.0))


class TestStarProduct:
    def test_constant_factor_is_plain_product(self):
        g = grid_2d(32, 8.0)
        f = ComplexField(g, np.full(g.shape, 2.0 + 1.0j))
        psi = smooth_random_field(g, 4)
        nc = NCParams.z_only(0.25, 0.0)
        out = star_product_first_order(f, psi, nc)
        assert np.abs(out.values - f.values * psi.values).max() <= 1e-14

    def test_conjugation_identity(self):
        g = grid_2d(48, 12.0)
        nc = NCParams.z_only(0.3, 0.0)
        f = smooth_random_field(g, 5)
        h = smooth_random_field(g, 6)
        lhs = np.conj(star_product_first_order(f, h, nc).values)
        fc = ComplexField(g, np.conj(f.values))
        hc = ComplexField(g, np.conj(h.values))
        rhs = star_product_first_order(hc, fc, nc).values
        assert np.abs(lhs - rhs).max() <= 1e-10

    def test_integral_identity(self):
        g = grid_2d(48, 12.0)
        nc = NCParams.z_only(0.3, 0.0)
        f = smooth_random_field(g, 7)
        h = smooth_random_field(g, 8)
        star = integrate(star_product_first_order(f, h, nc))
        plain = integrate(ComplexField(g, f.values * h.values))
        assert abs(star - plain) <= 1e-9

    def test_real_field_star_square_has_real_integral(self):
        g = grid_2d(48, 12.0)
        nc = NCParams.z_only(0.5, 0.0)
        f = smooth_random_field(g, 9)
        f = ComplexField(g, f.values.real)
        val = integrate(star_product_first_order(f, f, nc))
        assert abs(val.imag) <= 1e-10

    def test_grid_mismatch(self):
        f = smooth_random_field(grid_2d(32, 8.0), 1)
        h = smooth_random_field(grid_2d(32, 9.0), 1)
        with pytest.raises(ValueError, match="one grid"):
            star_product_first_order(f, h, NCParams())


class TestAngularMomentum:
    def test_radial_state_annihilated(self):
        g = grid_2d(64, 16.0)
        x, y = g.coordinate_arrays()
        psi = ComplexField(g, np.exp(-(x ** 2 + y ** 2) / 2) * np.ones(g.shape))
        out = angular_momentum_apply(psi, hbar=1.0)
        assert np.abs(out.values).max() <= 1e-9

    @pytest.mark.parametrize("sign", [+1, -1])
    def test_circulating_eigenstates(self, sign):
        g = grid_2d(64, 16.0)
        x, y = g.coordinate_arrays()
        psi = ComplexField(g, (x + sign * 1j * y) * np.exp(-(x ** 2 + y ** 2) / 2))
        out = angular_momentum_apply(psi, hbar=1.0)
        assert np.abs(out.values - sign * psi.values).max() <= 1e-8

    def test_3d_returns_components(self):
        # x+iy state is an m=1 state about z: L_z eigenvalue hbar.
        g = Grid(points=(32, 32, 32), extent=(14.0, 14.0, 14.0))
        x, y, z = g.coordinate_arrays()
        psi = ComplexField(g, (x + 1j * y) * np.exp(-(x ** 2 + y ** 2 + z ** 2) / 2))
        lx, ly, lz = angular_momentum_apply(psi, hbar=1.0)
        assert np.abs(lz.values - psi.values).max() <= 1e-7

    def test_dim1_rejected(self):
        g = Grid(points=(32,), extent=(8.0,))
        with pytest.raises(ConfigError, match="dim >= 2"):
            angular_momentum_apply(ComplexField(g, np.zeros(32)), 1.0)


class TestNcKinetic:
    def test_eta_zero_reduces_to_free_kinetic(self):
        g = grid_2d(48, 12.0)
        psi = smooth_random_field(g, 10)
        out = nc_kinetic_apply(psi, NCParams(hbar=1.0), m=2.0)
        expected = -laplacian(psi).values / (2 * 2.0)
        assert np.abs(out.values - expected).max() == 0.0

    def test_lz_eigenstate_shift(self):
        g = grid_2d(64, 16.0)
        x, y = g.coordinate_arrays()
        psi = ComplexField(g, (x + 1j * y) * np.exp(-(x ** 2 + y ** 2) / 2))
        eta_z, mass = 0.3, 1.5
        nc = NCParams.z_only(0.0, eta_z)
        shifted = nc_kinetic_apply(psi, nc, m=mass)
        free = nc_kinetic_apply(psi, NCParams(), m=mass)
        # L_z psi = hbar psi  =>  extra term -(1 * eta_z / mass) psi.
        delta = shifted.values - free.values
        assert np.abs(delta + (eta_z / mass) * psi.values).max() <= 1e-8

    def test_hermiticity(self):
        g = grid_2d(48, 12.0)
        nc = NCParams.z_only(0.0, 0.4)
        phi = smooth_random_field(g, 11)
        psi = smooth_random_field(g, 12)
        lhs = integrate(ComplexField(g, np.conj(phi.values) * nc_kinetic_apply(psi, nc, 1.0).values))
        rhs = integrate(ComplexField(g, np.conj(nc_kinetic_apply(phi, nc, 1.0).values) * psi.values))
        assert abs(lhs - rhs) <= 1e-9

    def test_in_plane_eta_rejected_on_2d(self):
        g = grid_2d(32, 8.0)
        psi = smooth_random_field(g, 13)
        nc = NCParams(eta=(0.1, 0.0, 0.0))
        with pytest.raises(ConfigError, match="in-plane"):
            nc_kinetic_apply(psi, nc, 1.0)
