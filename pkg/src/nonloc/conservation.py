"""Continuity diagnostics: density, current, sink densities, residuals, and
the Poisson-corrected total currents that restore a divergence-free flow.

Every sink density is scaled by i/hbar relative to the raw bilinear
combination the Schrodinger pairing generates, which makes each sink real and
puts the balance law in the form

    d rho / dt + div J + sigma_NL + sigma_L^nc + sigma_C = 0

with J = (hbar/m) Im(psi* grad psi).  With consistent discrete operators this
identity holds to solver tolerance for Crank-Nicolson snapshot pairs when the
time derivative is the centered difference and everything else is evaluated
at the midpoint state.

Each active sink is absorbed into a gradient correction by solving a Poisson
problem: div(-grad chi) = -lap chi = sigma gives J_X = -grad chi with
div J_X = sigma, so the corrected total current satisfies
div J_tot = -d rho/dt.  A sink whose global integral is nonzero (absorbing
local potential) admits no periodic gradient correction; it is reported as
irreducible rather than silently projected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .dynamics import HamiltonianSpec
from .errors import SolverError
from .fieldlab import (
    ComplexField,
    PERIODIC,
    RealField,
    VectorField,
    _laplacian_k2,
    divergence,
    gradient_values,
    integrate,
    l2_norm,
    laplacian_values,
    zeros_like_real,
    zeros_like_vector,
)
from .ncalgebra import NCParams, eta_dot_l_values
from .potentials import (
    NonlocalKernelSpec,
    apply_nonlocal,
    eval_local,
    local_gradient,
)

logger = logging.getLogger("nonloc")

POISSON_COMPAT_TOL = 1e-8


def density(psi: ComplexField) -> RealField:
    return RealField(psi.grid, np.abs(psi.values) ** 2, _copy=False)


def current(psi: ComplexField, m: float, hbar: float) -> VectorField:
    """Probability current J = (hbar/m) Im(psi* grad psi)."""
    grid = psi.grid
    comps = np.empty((grid.dim,) + grid.shape)
    conj = np.conj(psi.values)
    for axis in range(grid.dim):
        comps[axis] = (hbar / m) * np.imag(conj * gradient_values(psi.values, grid, axis))
    return VectorField(grid, comps, _copy=False)


def sink_nonlocal(psi: ComplexField, kernel: NonlocalKernelSpec, hbar: float) -> RealField:
    """sigma_NL = -(2/hbar) Im[psi* (K psi)]; identically real for any kernel."""
    k_psi = apply_nonlocal(kernel, psi)
    vals = -(2.0 / hbar) * np.imag(np.conj(psi.values) * k_psi.values)
    return RealField(psi.grid, vals, _copy=False)


def sink_local(psi: ComplexField, V: ComplexField, hbar: float) -> RealField:
    """sigma_L = -(2/hbar) Im(V) |psi|^2; zero pointwise for Hermitian V."""
    vals = -(2.0 / hbar) * V.values.imag * np.abs(psi.values) ** 2
    return RealField(psi.grid, vals, _copy=False)


def sink_local_nc(psi: ComplexField, V: ComplexField, nc: NCParams, hbar: float,
                  grad_v: tuple[ComplexField, ...] | None = None) -> RealField:
    """sigma_L plus the star-product correction
    -(1/hbar) Theta_ab Re[psi* (d_a V)(d_b psi)].

    The correction term is Hermitian-generated for real V: its global
    integral vanishes while the pointwise field does not.  ``grad_v`` must
    match whatever gradient the Hamiltonian's star term used.
    """
    base = sink_local(psi, V, hbar).values
    if any(t != 0.0 for t in nc.theta):
        grid = psi.grid
        theta_m = nc.theta_matrix
        if grad_v is None:
            grads = [gradient_values(V.values, grid, ax) for ax in range(grid.dim)]
        else:
            grads = [g.values for g in grad_v]
        conj = np.conj(psi.values)
        dpsi = {}
        for a in range(grid.dim):
            for b in range(grid.dim):
                t = theta_m[a, b]
                if a == b or t == 0.0:
                    continue
                if b not in dpsi:
                    dpsi[b] = gradient_values(psi.values, grid, b)
                base = base - (t / hbar) * np.real(conj * grads[a] * dpsi[b])
    return RealField(psi.grid, base, _copy=False)


def sink_nc_phase(psi: ComplexField, nc: NCParams, m: float, hbar: float) -> RealField:
    """sigma_C = (2 / m hbar^2) Im[psi* (eta.L psi)], from the momentum-sector
    correction; vanishes identically when eta = 0."""
    grid = psi.grid
    if all(e == 0.0 for e in nc.eta):
        return zeros_like_real(grid)
    eta_l = eta_dot_l_values(psi.values, grid, nc)
    vals = (2.0 / (m * hbar ** 2)) * np.imag(np.conj(psi.values) * eta_l)
    return RealField(grid, vals, _copy=False)


@dataclass(frozen=True)
class SinkFields:
    sigma_nl: RealField
    sigma_l: RealField
    sigma_l_nc: RealField
    sigma_c: RealField


@dataclass(frozen=True)
class ContinuityReport:
    """Balance-law snapshot between two consecutive propagator states."""

    rho: RealField
    J: VectorField
    sinks: SinkFields
    drho_dt: RealField

    @property
    def residual(self) -> RealField:
        vals = (
            self.drho_dt.values
            + divergence(self.J).values
            + self.sinks.sigma_nl.values
            + self.sinks.sigma_l_nc.values
            + self.sinks.sigma_c.values
        )
        return RealField(self.rho.grid, vals, _copy=False)

    @property
    def residual_l2(self) -> float:
        return l2_norm(self.residual)

    @property
    def residual_max(self) -> float:
        return float(np.abs(self.residual.values).max())

    @property
    def sink_integrals(self) -> dict[str, float]:
        return {
            "NL": integrate(self.sinks.sigma_nl),
            "L": integrate(self.sinks.sigma_l),
            "L_nc": integrate(self.sinks.sigma_l_nc),
            "C": integrate(self.sinks.sigma_c),
        }

    @property
    def sink_l2(self) -> dict[str, float]:
        """L2 norms of the sink fields; the global integrals vanish for
        Hermitian generators, so these are the scalars that show which
        sinks are active."""
        return {
            "NL": l2_norm(self.sinks.sigma_nl),
            "L": l2_norm(self.sinks.sigma_l),
            "L_nc": l2_norm(self.sinks.sigma_l_nc),
            "C": l2_norm(self.sinks.sigma_c),
        }


def continuity_report(psi_prev: ComplexField, psi_next: ComplexField, dt: float,
                      H: HamiltonianSpec) -> ContinuityReport:
    """Assemble the balance law from two consecutive snapshots dt apart.

    J and sinks are evaluated at the midpoint state (psi_prev + psi_next)/2;
    the density derivative is the centered difference, keeping the residual
    at the time-stepping order.  For exact-operator paths the residual drops
    to the linear-solver floor; the fl-approx path leaves the linearization
    error visible in the residual by design.
    """
    if psi_prev.grid != psi_next.grid:
        raise ValueError("snapshots live on different grids")
    grid = psi_prev.grid
    mid = ComplexField(grid, 0.5 * (psi_prev.values + psi_next.values), _copy=False)

    rho_prev = np.abs(psi_prev.values) ** 2
    rho_next = np.abs(psi_next.values) ** 2
    drho_dt = RealField(grid, (rho_next - rho_prev) / dt, _copy=False)

    if H.nonlocal_kernel is not None:
        sigma_nl = sink_nonlocal(mid, H.nonlocal_kernel, H.hbar)
    else:
        sigma_nl = zeros_like_real(grid)

    if H.local.kind != "none":
        V = eval_local(H.local, grid, mass=H.mass)
        grad_v = local_gradient(H.local, grid, mass=H.mass)
        sigma_l = sink_local(mid, V, H.hbar)
        sigma_l_nc = sink_local_nc(mid, V, H.nc, H.hbar, grad_v=grad_v)
    else:
        sigma_l = zeros_like_real(grid)
        sigma_l_nc = zeros_like_real(grid)

    sigma_c = sink_nc_phase(mid, H.nc, H.mass, H.hbar)

    return ContinuityReport(
        rho=density(mid),
        J=current(mid, H.mass, H.hbar),
        sinks=SinkFields(sigma_nl, sigma_l, sigma_l_nc, sigma_c),
        drho_dt=drho_dt,
    )


# ---------------------------------------------------------------------------
# Poisson machinery and corrected currents.

def poisson_solve(source: RealField, tol: float = 1e-12, max_iter: int = 10_000) -> RealField:
    """chi with lap(chi) = -source.

    Periodic grids invert spectrally in the zero-mean gauge (non-invertible
    Nyquist-line content, which is zero for resolved sources, is projected
    out); the mean of the source must vanish within POISSON_COMPAT_TOL.
    Dirichlet-zero grids use conjugate-gradient iteration on the
    finite-difference Laplacian.
    """
    grid = source.grid
    if grid.boundary == PERIODIC:
        total = integrate(source)
        if abs(total) > POISSON_COMPAT_TOL:
            raise SolverError(
                f"periodic Poisson source has nonzero integral {total:.3e}; "
                "no compatible gradient correction exists"
            )
        k2 = _laplacian_k2(grid)
        shat = np.fft.fftn(source.values)
        invertible = k2 > 0.0
        dropped = np.abs(shat[~invertible]).max() if np.any(~invertible) else 0.0
        if dropped > 0.0:
            logger.debug("poisson_solve: zero-mean gauge drops non-invertible "
                         "mode content of magnitude %.3e", dropped)
        chat = np.zeros_like(shat)
        chat[invertible] = shat[invertible] / k2[invertible]
        return RealField(grid, np.fft.ifftn(chat).real, _copy=False)

    shape = grid.shape
    n = source.values.size

    def neg_lap(x):
        return -laplacian_values(x.reshape(shape), grid).ravel()

    A = LinearOperator((n, n), matvec=neg_lap, dtype=np.float64)
    x, info = cg(A, source.values.ravel(), rtol=tol, atol=0.0, maxiter=max_iter)
    if info != 0:
        raise SolverError(f"dirichlet Poisson solve did not converge (info={info})")
    return RealField(grid, x.reshape(shape), _copy=False)


@dataclass(frozen=True)
class CurrentDecomposition:
    """J plus the gradient corrections absorbing each sink.

    J_NL = -grad chi_NL and J_L = -grad phi_L carry div J_X = sigma_X; the
    phase-sector correction kappa = grad phi_C is built so div kappa = sigma_C.
    J_tot = J + J_NL + J_L (+ kappa in nc mode) then satisfies
    div J_tot = -d rho/dt up to the report residual.
    """

    mode: str
    J: VectorField
    J_NL: VectorField
    J_L: VectorField
    kappa: VectorField
    J_tot: VectorField
    chi_NL: RealField
    phi_L: RealField
    phi_C: RealField
    div_jtot_l2: float
    irreducible: tuple[str, ...] = ()


def _neg_gradient_field(potential: RealField) -> VectorField:
    grid = potential.grid
    comps = np.empty((grid.dim,) + grid.shape)
    for axis in range(grid.dim):
        comps[axis] = -gradient_values(potential.values, grid, axis)
    return VectorField(grid, comps, _copy=False)


def _sink_reducible(sigma: RealField, name: str, irreducible: list[str]) -> bool:
    if not np.any(sigma.values):
        return False
    if sigma.grid.boundary == PERIODIC and abs(integrate(sigma)) > POISSON_COMPAT_TOL:
        logger.warning("sink %s integrates to %.3e; no periodic gradient correction "
                       "exists, reporting it as irreducible", name, integrate(sigma))
        irreducible.append(name)
        return False
    return True


def corrected_currents(report: ContinuityReport, mode: str = "commutative") -> CurrentDecomposition:
    """Build the corrected total current from a continuity report.

    mode="commutative" absorbs sigma_NL and sigma_L; mode="nc" absorbs
    sigma_NL, sigma_L^nc and sigma_C (the latter through kappa).  With
    theta = eta = 0 both modes produce identical decompositions.
    """
    if mode not in ("commutative", "nc"):
        raise ValueError(f"unknown mode {mode!r}")
    grid = report.rho.grid
    irreducible: list[str] = []

    chi_nl, j_nl = zeros_like_real(grid), zeros_like_vector(grid)
    if _sink_reducible(report.sinks.sigma_nl, "NL", irreducible):
        chi_nl = poisson_solve(report.sinks.sigma_nl)
        j_nl = _neg_gradient_field(chi_nl)

    sigma_local = report.sinks.sigma_l if mode == "commutative" else report.sinks.sigma_l_nc
    phi_l, j_l = zeros_like_real(grid), zeros_like_vector(grid)
    if _sink_reducible(sigma_local, "L" if mode == "commutative" else "L_nc", irreducible):
        phi_l = poisson_solve(sigma_local)
        j_l = _neg_gradient_field(phi_l)

    phi_c, kappa = zeros_like_real(grid), zeros_like_vector(grid)
    if mode == "nc" and _sink_reducible(report.sinks.sigma_c, "C", irreducible):
        # kappa = +grad phi_C with lap phi_C = +sigma_C, so that div kappa = sigma_C.
        phi_c = poisson_solve(RealField(grid, -report.sinks.sigma_c.values, _copy=False))
        kappa = VectorField(grid, -_neg_gradient_field(phi_c).values, _copy=False)

    j_tot_vals = report.J.values + j_nl.values + j_l.values + kappa.values
    j_tot = VectorField(grid, j_tot_vals, _copy=False)

    return CurrentDecomposition(
        mode=mode,
        J=report.J,
        J_NL=j_nl,
        J_L=j_l,
        kappa=kappa,
        J_tot=j_tot,
        chi_NL=chi_nl,
        phi_L=phi_l,
        phi_C=phi_c,
        div_jtot_l2=l2_norm(divergence(j_tot)),
        irreducible=tuple(irreducible),
    )
