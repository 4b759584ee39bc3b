import numpy as np
import pytest

from nonloc.conservation import (
    continuity_report,
    corrected_currents,
    current,
    density,
    poisson_solve,
    sink_local,
    sink_local_nc,
    sink_nc_phase,
    sink_nonlocal,
)
from nonloc.dynamics import HamiltonianSpec, Propagator, PropagatorConfig
from nonloc.errors import SolverError
from nonloc.fieldlab import (
    ComplexField,
    Grid,
    RealField,
    divergence,
    gradient_values,
    integrate,
    l2_norm,
    laplacian,
)
from nonloc.ncalgebra import NCParams, angular_momentum_apply, validate_nc_params
from nonloc.potentials import (
    LocalPotentialSpec,
    NonlocalKernelSpec,
    eval_local,
    frahn_lemmer_eval,
    local_gradient,
)

from conftest import smooth_random_field, smooth_random_real


def gaussian_packet(grid, center, width, momentum):
    coords = grid.coordinate_arrays()
    center = np.atleast_1d(center)
    momentum = np.atleast_1d(momentum)
    env = sum((x - c) ** 2 for x, c in zip(coords, center))
    phase = sum(k * x for x, k in zip(coords, momentum))
    return ComplexField(grid, np.exp(-env / (2 * width ** 2) + 1j * phase)).normalize()


class TestDensityCurrent:
    def test_zero_state(self):
        g = Grid(points=(32,), extent=(8.0,))
        assert np.abs(density(ComplexField(g, np.zeros(32))).values).max() == 0.0

    def test_normalized_state_integrates_to_one(self):
        g = Grid(points=(128,), extent=(30.0,))
        psi = gaussian_packet(g, 0.0, 2.0, 1.0)
        assert integrate(density(psi)) == pytest.approx(1.0, abs=1e-10)

    def test_density_phase_invariant(self):
        g = Grid(points=(64,), extent=(16.0,))
        psi = smooth_random_field(g, 1)
        rotated = ComplexField(g, np.exp(1j * 0.7) * psi.values)
        assert np.allclose(density(rotated).values, density(psi).values,
                           rtol=1e-14, atol=1e-16)

    def test_real_state_has_zero_current(self):
        g = Grid(points=(64,), extent=(16.0,))
        x = g.axis_coordinates(0)
        psi = ComplexField(g, np.exp(-x ** 2 / 2))
        assert np.abs(current(psi, 1.0, 1.0).values).max() <= 1e-14

    def test_plane_wave_current(self):
        g = Grid(points=(64,), extent=(16.0,))
        x = g.axis_coordinates(0)
        k = 2 * np.pi * 3 / 16.0
        A = 0.6
        psi = ComplexField(g, A * np.exp(1j * k * x))
        J = current(psi, 1.0, 1.0)
        assert np.abs(J.values - k * A ** 2).max() <= 1e-12

    def test_conjugation_flips_current(self):
        g = Grid(points=(64,), extent=(16.0,))
        psi = smooth_random_field(g, 2)
        J = current(psi, 1.0, 1.0).values
        J_conj = current(ComplexField(g, np.conj(psi.values)), 1.0, 1.0).values
        assert np.abs(J + J_conj).max() <= 1e-13


class TestSinkNonlocal:
    def test_real_state_real_kernel_zero(self):
        g = Grid(points=(128,), extent=(20.0,))
        x = g.axis_coordinates(0)
        psi = ComplexField(g, np.exp(-x ** 2 / 2))
        k = NonlocalKernelSpec.frahn_lemmer(1.0, 0.85)
        assert np.abs(sink_nonlocal(psi, k, 1.0).values).max() <= 1e-12

    def test_global_integral_vanishes(self):
        g = Grid(points=(128,), extent=(20.0,))
        psi = smooth_random_field(g, 3)
        k = NonlocalKernelSpec.frahn_lemmer(1.3, 0.9)
        assert abs(integrate(sink_nonlocal(psi, k, 1.0))) <= 1e-9

    def test_matches_dense_double_loop_oracle(self):
        # Independent oracle: dense double loop over grid pairs with
        # minimum-image distances, no stencil machinery.
        g = Grid(points=(64,), extent=(16.0,))
        x = g.axis_coordinates(0)
        L = g.extent[0]
        V0, beta, hbar = 1.0, 0.85, 1.0
        psi = gaussian_packet(g, -2.0, 1.5, 1.0)
        kspec = NonlocalKernelSpec.frahn_lemmer(V0, beta)

        kpsi = np.zeros(64, dtype=complex)
        for i in range(64):
            for j in range(64):
                d = abs(x[i] - x[j])
                d = min(d, L - d)
                kpsi[i] += frahn_lemmer_eval(0.0, d, V0, beta, 1) * psi.values[j]
        kpsi *= g.cell_volume
        oracle = (1j / hbar) * (np.conj(psi.values) * kpsi - psi.values * np.conj(kpsi))
        assert np.abs(oracle.imag).max() <= 1e-12

        mine = sink_nonlocal(psi, kspec, hbar)
        assert np.abs(mine.values - oracle.real).max() <= 1e-9
        assert np.abs(mine.values).max() > 1e-3  # genuinely nonzero field


class TestSinkLocal:
    def test_real_potential_zero_pointwise(self):
        g = Grid(points=(64,), extent=(16.0,))
        psi = smooth_random_field(g, 4)
        V = eval_local(LocalPotentialSpec(kind="harmonic", omega=1.0), g)
        assert np.abs(sink_local(psi, V, 1.0).values).max() == 0.0

    def test_uniform_absorber_decay(self):
        W0, hbar, dt, steps = 0.5, 1.0, 1e-3, 500
        g = Grid(points=(64,), extent=(20.0,))
        spec = LocalPotentialSpec(kind="complex-absorber", W0=W0)
        psi = gaussian_packet(g, 0.0, 1.5, 1.0)
        sink = sink_local(psi, eval_local(spec, g), hbar)
        assert np.allclose(sink.values, (2 * W0 / hbar) * density(psi).values, atol=1e-14)

        H = HamiltonianSpec(mass=1.0, hbar=hbar, local=spec)
        prop = Propagator(H, PropagatorConfig(dt=dt, solver_tol=1e-13), psi)
        for _ in range(steps):
            prop.step()
        norm = integrate(density(prop.psi))
        assert abs(norm - np.exp(-2 * W0 * steps * dt / hbar)) <= 1e-4

    def test_theta_term_conserves_globally(self):
        g = Grid(points=(48, 48), extent=(14.0, 14.0))
        nc = validate_nc_params((0, 0, 0.3), (0, 0, 0), 1.0, dim=2)
        spec = LocalPotentialSpec(kind="linear", h=1.2)
        V = eval_local(spec, g)
        gv = local_gradient(spec, g)
        psi = smooth_random_field(g, 5)
        sig = sink_local_nc(psi, V, nc, 1.0, grad_v=gv)
        assert abs(integrate(sig)) <= 1e-9
        assert np.abs(sig.values).max() > 1e-6  # pointwise violation is real

    def test_reduces_to_sink_local_when_theta_zero(self):
        g = Grid(points=(48, 48), extent=(14.0, 14.0))
        spec = LocalPotentialSpec(kind="complex-absorber", W0=0.3, region=(-2.0, 2.0))
        V = eval_local(spec, g)
        psi = smooth_random_field(g, 6)
        a = sink_local(psi, V, 1.0).values
        b = sink_local_nc(psi, V, NCParams(), 1.0).values
        assert np.array_equal(a, b)


class TestSinkNcPhase:
    def test_eta_zero(self):
        g = Grid(points=(32, 32), extent=(8.0, 8.0))
        psi = smooth_random_field(g, 7)
        assert np.abs(sink_nc_phase(psi, NCParams(), 1.0, 1.0).values).max() == 0.0

    def test_radial_state_vanishes(self):
        g = Grid(points=(64, 64), extent=(16.0, 16.0))
        x, y = g.coordinate_arrays()
        psi = ComplexField(g, np.exp(-(x ** 2 + y ** 2) / 2) * np.ones(g.shape))
        nc = validate_nc_params((0, 0, 0), (0, 0, 0.4), 1.0, dim=2)
        assert np.abs(sink_nc_phase(psi, nc, 1.0, 1.0).values).max() <= 1e-9

    def test_lz_eigenstate_oracle(self):
        g = Grid(points=(64, 64), extent=(16.0, 16.0))
        x, y = g.coordinate_arrays()
        eta_z, m, hbar = 0.4, 1.3, 1.0
        psi = ComplexField(g, (x + 1j * y) * np.exp(-(x ** 2 + y ** 2) / 2))
        nc = validate_nc_params((0, 0, 0), (0, 0, eta_z), hbar, dim=2)
        sig = sink_nc_phase(psi, nc, m, hbar)
        assert abs(integrate(sig)) <= 1e-9
        lz = angular_momentum_apply(psi, hbar)
        oracle = (2 * eta_z / (m * hbar ** 2)) * np.imag(np.conj(psi.values) * lz.values)
        assert np.abs(sig.values - oracle).max() <= 1e-12


class TestContinuityReport:
    def run_one_step(self, grid, H, psi0, dt=1e-3):
        prop = Propagator(H, PropagatorConfig(dt=dt, solver_tol=1e-13), psi0)
        prev = prop.psi
        new = prop.step()
        return continuity_report(prev, new, dt, H)

    def test_free_particle_floor(self):
        g = Grid(points=(128,), extent=(40.0,))
        rep = self.run_one_step(g, HamiltonianSpec(mass=1.0),
                                gaussian_packet(g, 0.0, 2.0, 1.0))
        assert rep.residual_l2 <= 1e-8

    def test_nonlocal_requires_sink(self):
        g = Grid(points=(256,), extent=(40.0,))
        H = HamiltonianSpec(mass=1.0, hbar=1.0,
                            nonlocal_kernel=NonlocalKernelSpec.frahn_lemmer(1.0, 0.85),
                            nonlocal_path="quadrature")
        rep = self.run_one_step(g, H, gaussian_packet(g, -5.0, 1.5, 1.0))
        naive = RealField(g, rep.drho_dt.values + divergence(rep.J).values)
        assert l2_norm(naive) > 1e-3
        assert rep.residual_l2 <= 1e-7

    def test_full_nc_ablations(self):
        g = Grid(points=(64, 64), extent=(16.0, 16.0))
        nc = validate_nc_params((0, 0, 0.1), (0, 0, 0.05), 1.0, dim=2)
        H = HamiltonianSpec(mass=1.0, hbar=1.0,
                            local=LocalPotentialSpec(kind="gaussian-well", depth=1.0, width=1.6),
                            nonlocal_kernel=NonlocalKernelSpec.frahn_lemmer(0.5, 0.85),
                            nc=nc, nonlocal_path="quadrature")
        rep = self.run_one_step(g, H, gaussian_packet(g, (1.0, 0.0), 0.9, (0.5, 0.3)),
                                dt=2e-3)
        full = rep.residual_l2
        assert full <= 1e-6
        no_c = l2_norm(RealField(g, rep.residual.values - rep.sinks.sigma_c.values))
        theta_part = rep.sinks.sigma_l_nc.values - rep.sinks.sigma_l.values
        no_theta = l2_norm(RealField(g, rep.residual.values - theta_part))
        no_nl = l2_norm(RealField(g, rep.residual.values - rep.sinks.sigma_nl.values))
        assert no_c >= 1e3 * full
        assert no_theta >= 1e3 * full
        assert no_nl >= 1e3 * full

    def test_grid_mismatch(self):
        a = gaussian_packet(Grid(points=(64,), extent=(16.0,)), 0.0, 1.0, 0.0)
        b = gaussian_packet(Grid(points=(64,), extent=(18.0,)), 0.0, 1.0, 0.0)
        with pytest.raises(ValueError, match="grids"):
            continuity_report(a, b, 1e-3, HamiltonianSpec(mass=1.0))

    def test_sink_integral_keys(self):
        g = Grid(points=(64,), extent=(16.0,))
        rep = self.run_one_step(g, HamiltonianSpec(mass=1.0),
                                gaussian_packet(g, 0.0, 1.5, 0.5))
        assert set(rep.sink_integrals) == {"NL", "L", "L_nc", "C"}


class TestPoisson:
    def test_zero_source(self):
        g = Grid(points=(64,), extent=(16.0,))
        chi = poisson_solve(RealField(g, np.zeros(64)))
        assert np.abs(chi.values).max() == 0.0

    def test_sine_inversion(self):
        g = Grid(points=(128,), extent=(2 * np.pi,))
        x = g.axis_coordinates(0)
        chi = poisson_solve(RealField(g, np.sin(x)))
        assert np.abs(chi.values - np.sin(x)).max() <= 1e-10

    def test_round_trip_periodic(self):
        g = Grid(points=(48, 48), extent=(12.0, 12.0))
        src = smooth_random_real(g, 8)
        src = RealField(g, src.values - src.values.mean())
        chi = poisson_solve(src)
        assert np.abs(laplacian(chi).values + src.values).max() <= 1e-9

    def test_round_trip_dirichlet(self):
        g = Grid(points=(48, 48), extent=(12.0, 12.0), boundary="dirichlet-zero")
        ref = Grid(points=(48, 48), extent=(12.0, 12.0))
        src = RealField(g, smooth_random_real(ref, 9).values)
        chi = poisson_solve(src)
        resid = laplacian(chi).values + src.values
        assert np.sqrt(g.cell_volume) * np.linalg.norm(resid) <= 1e-9

    def test_incompatible_source_rejected(self):
        g = Grid(points=(64,), extent=(16.0,))
        with pytest.raises(SolverError, match="integral"):
            poisson_solve(RealField(g, np.ones(64)))

    def test_gauge_zero_mean(self):
        g = Grid(points=(64,), extent=(16.0,))
        src = smooth_random_real(g, 10)
        src = RealField(g, src.values - src.values.mean())
        chi = poisson_solve(src)
        assert abs(chi.values.mean()) <= 1e-13


class TestCorrectedCurrents:
    def one_report(self, grid, H, psi0, dt=1e-3):
        prop = Propagator(H, PropagatorConfig(dt=dt, solver_tol=1e-13), psi0)
        prev = prop.psi
        new = prop.step()
        return continuity_report(prev, new, dt, H)

    def test_no_sinks_returns_plain_current(self):
        g = Grid(points=(128,), extent=(40.0,))
        rep = self.one_report(g, HamiltonianSpec(mass=1.0),
                              gaussian_packet(g, 0.0, 2.0, 1.0))
        dec = corrected_currents(rep)
        assert np.array_equal(dec.J_tot.values, rep.J.values)
        assert np.abs(dec.kappa.values).max() == 0.0

    def test_hermitian_snapshot_balance(self):
        g = Grid(points=(256,), extent=(40.0,))
        H = HamiltonianSpec(mass=1.0, hbar=1.0,
                            nonlocal_kernel=NonlocalKernelSpec.frahn_lemmer(1.0, 0.85),
                            nonlocal_path="quadrature")
        rep = self.one_report(g, H, gaussian_packet(g, -5.0, 1.5, 1.0))
        dec = corrected_currents(rep)
        balance = RealField(g, divergence(dec.J_tot).values + rep.drho_dt.values)
        assert l2_norm(balance) <= 1e-6
        # The non-local correction is a genuinely nonzero gradient field.
        assert l2_norm(dec.J_NL) > 1e-3

    def test_nc_mode_with_zero_params_matches_commutative(self):
        g = Grid(points=(256,), extent=(40.0,))
        H = HamiltonianSpec(mass=1.0, hbar=1.0,
                            nonlocal_kernel=NonlocalKernelSpec.frahn_lemmer(1.0, 0.85),
                            nonlocal_path="quadrature")
        rep = self.one_report(g, H, gaussian_packet(g, -5.0, 1.5, 1.0))
        a = corrected_currents(rep, mode="commutative")
        b = corrected_currents(rep, mode="nc")
        assert np.array_equal(a.J_tot.values, b.J_tot.values)
        assert np.abs(b.kappa.values).max() == 0.0

    def test_nc_kappa_absorbs_phase_sink(self, stationary_nc_state):
        H = stationary_nc_state["H"]
        psi = stationary_nc_state["psi"]
        g = stationary_nc_state["grid"]
        rep = self.one_report(g, H, psi, dt=1e-3)
        dec = corrected_currents(rep, mode="nc")
        assert np.abs(dec.kappa.values).max() > 0.0
        # div kappa = sigma_C by construction.
        resid = divergence(dec.kappa).values - rep.sinks.sigma_c.values
        assert np.sqrt(g.cell_volume) * np.linalg.norm(resid) <= 1e-9
        balance = RealField(g, divergence(dec.J_tot).values + rep.drho_dt.values)
        assert l2_norm(balance) <= 1e-6

    def test_irreducible_absorber_sink(self):
        g = Grid(points=(64,), extent=(20.0,))
        H = HamiltonianSpec(mass=1.0, hbar=1.0,
                            local=LocalPotentialSpec(kind="complex-absorber", W0=0.5))
        rep = self.one_report(g, H, gaussian_packet(g, 0.0, 1.5, 1.0))
        dec = corrected_currents(rep)
        assert dec.irreducible == ("L",)
        assert np.abs(dec.J_L.values).max() == 0.0

    def test_gauge_shift_does_not_change_correction(self):
        g = Grid(points=(64,), extent=(16.0,))
        chi = smooth_random_real(g, 11)
        shifted = RealField(g, chi.values + 3.7)
        grad_a = gradient_values(chi.values, g, 0)
        grad_b = gradient_values(shifted.values, g, 0)
        assert np.abs(grad_a - grad_b).max() <= 1e-12


class TestSinkRealnessContract:
    def test_complex_expressions_have_tiny_imaginary_parts(self):
        g = Grid(points=(64, 64), extent=(16.0, 16.0))
        psi = smooth_random_field(g, 12)
        hbar = 1.0
        kernel = NonlocalKernelSpec.frahn_lemmer(0.8, 0.9)
        from nonloc.potentials import apply_nonlocal
        kpsi = apply_nonlocal(kernel, psi).values
        expr_nl = (1j / hbar) * (np.conj(psi.values) * kpsi
                                 - psi.values * np.conj(kpsi))
        assert np.abs(expr_nl.imag).max() <= 1e-12

        nc = validate_nc_params((0, 0, 0.2), (0, 0, 0.08), 1.0, dim=2)
        lz = angular_momentum_apply(psi, hbar).values
        eta_l = nc.eta[2] * lz
        expr_c = (1j / hbar) * (-1.0 / (1.0 * hbar)) * (
            np.conj(psi.values) * eta_l + psi.values * np.conj(-eta_l))
        assert np.abs(expr_c.imag).max() <= 1e-12
