"""Hamiltonian assembly and time evolution.

The canonical real-time propagator is matrix-free Crank-Nicolson:

    (1 + i dt H / 2 hbar) psi' = (1 - i dt H / 2 hbar) psi

solved iteratively (GMRES) with a momentum-space preconditioner on periodic
grids; when every term of H is diagonal in momentum space the solve is done
exactly by spectral division instead.  Split-step is an optimization path
restricted to Hamiltonians that split into momentum-diagonal plus
position-diagonal parts (no star term, no angular-momentum term).
Imaginary-time stepping uses psi' ~ (1 - dtau H / hbar) psi, renormalized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConfigError, SolverError
from .fieldlab import (
    ComplexField,
    Grid,
    PERIODIC,
    _laplacian_k2,
    gradient_values,
    laplacian_values,
)
from .ncalgebra import NCParams, eta_dot_l_values, validate_nc_params
from .potentials import (
    LocalPotentialSpec,
    NonlocalKernelSpec,
    _fl_stencil,
    eval_local,
    local_gradient,
    momentum_multiplier,
)
from . import _kernels

NONLOCAL_PATHS = ("quadrature", "momentum", "fl-approx")


def fl_nc_coefficients(V0: float, beta: float, m: float, hbar: float) -> tuple[float, float]:
    """Coefficients of the linearized Gaussian-kernel Hamiltonian
    -a lap(psi) + b (eta.L) psi + V0 psi."""
    if beta <= 0 or m <= 0 or hbar <= 0:
        raise ConfigError("fl_nc_coefficients needs positive beta, m, hbar")
    a = hbar ** 2 / (2.0 * m) + V0 * beta ** 2 / 4.0
    b = V0 * beta ** 2 / (2.0 * hbar ** 3) - 1.0 / (m * hbar)
    return a, b


@dataclass(frozen=True)
class HamiltonianSpec:
    mass: float
    hbar: float = 1.0
    local: LocalPotentialSpec = LocalPotentialSpec()
    nonlocal_kernel: NonlocalKernelSpec | None = None
    nc: NCParams = NCParams()
    nonlocal_path: str = "quadrature"
    fl_coefficients: tuple[float, float] | None = None

    def __post_init__(self):
        if self.mass <= 0 or self.hbar <= 0:
            raise ConfigError("mass and hbar must be positive")
        if self.hbar != self.nc.hbar:
            raise ConfigError("hbar mismatch between HamiltonianSpec and NCParams")
        if self.nonlocal_path not in NONLOCAL_PATHS:
            raise ConfigError(f"unknown nonlocal_path {self.nonlocal_path!r}")
        if self.nonlocal_path in ("momentum", "fl-approx"):
            if self.nonlocal_kernel is None or self.nonlocal_kernel.kind != "frahn-lemmer":
                raise ConfigError(f"{self.nonlocal_path} path requires a frahn-lemmer kernel")
        if self.nonlocal_path == "fl-approx":
            k = self.nonlocal_kernel
            expected = fl_nc_coefficients(k.V0, k.beta, self.mass, self.hbar)
            if self.fl_coefficients is None:
                object.__setattr__(self, "fl_coefficients", expected)
            else:
                got = tuple(float(c) for c in self.fl_coefficients)
                if not np.allclose(got, expected, rtol=1e-12, atol=0.0):
                    raise ConfigError(
                        f"fl_coefficients {got} disagree with recomputed {expected}"
                    )
        elif self.fl_coefficients is not None:
            raise ConfigError("fl_coefficients are only meaningful for the fl-approx path")

    @property
    def is_hermitian(self) -> bool:
        if not self.local.is_real:
            return False
        k = self.nonlocal_kernel
        if k is not None and k.kind == "tabulated" and not k.real_symmetric:
            return False
        return True


class _BoundHamiltonian:
    """H bound to a grid: one momentum-space symbol plus non-diagonal callables."""

    def __init__(self, grid: Grid, k_symbol: np.ndarray | None, callables: tuple):
        self.grid = grid
        self.k_symbol = k_symbol
        self.callables = callables

    @property
    def is_momentum_diagonal(self) -> bool:
        return self.k_symbol is not None and not self.callables

    def apply(self, values: np.ndarray) -> np.ndarray:
        if self.k_symbol is not None:
            out = np.fft.ifftn(self.k_symbol * np.fft.fftn(values))
        else:
            out = np.zeros_like(values, dtype=np.complex128)
        for fn in self.callables:
            out = out + fn(values)
        return out

    def scale_estimate(self) -> float:
        scale = 0.0
        if self.k_symbol is not None:
            scale += float(np.abs(self.k_symbol).max())
        return scale


@lru_cache(maxsize=16)
def _bound_operator(H: HamiltonianSpec, grid: Grid) -> _BoundHamiltonian:
    validate_nc_params(H.nc.theta, H.nc.eta, H.nc.hbar, dim=grid.dim)
    if H.nonlocal_path == "momentum" and H.nonlocal_kernel is not None:
        grid._require_periodic("momentum-path nonlocal term")

    hbar, m = H.hbar, H.mass
    periodic = grid.boundary == PERIODIC
    k_symbol = None
    callables = []

    if H.nonlocal_path == "fl-approx":
        a, b = H.fl_coefficients
        V0 = H.nonlocal_kernel.V0
        if periodic:
            k_symbol = a * _laplacian_k2(grid) + V0
        else:
            def fl_local_part(x, a=a, V0=V0):
                return -a * laplacian_values(x, grid) + V0 * x
            callables.append(fl_local_part)
        if any(e != 0.0 for e in H.nc.eta):
            def fl_eta_part(x, b=b):
                return b * eta_dot_l_values(x, grid, H.nc)
            callables.append(fl_eta_part)
    else:
        if periodic:
            k_symbol = (hbar ** 2 / (2.0 * m)) * _laplacian_k2(grid)
        else:
            def kinetic(x):
                return (-hbar ** 2 / (2.0 * m)) * laplacian_values(x, grid)
            callables.append(kinetic)
        if any(e != 0.0 for e in H.nc.eta):
            def bopp(x):
                return (-1.0 / (m * hbar)) * eta_dot_l_values(x, grid, H.nc)
            callables.append(bopp)
        if H.nonlocal_kernel is not None:
            if H.nonlocal_path == "momentum":
                k = H.nonlocal_kernel
                k_symbol = k_symbol + momentum_multiplier(k.V0, k.beta, grid)
            elif H.nonlocal_kernel.kind == "frahn-lemmer":
                k = H.nonlocal_kernel
                offsets, base_w = _fl_stencil(k.beta, grid)
                stencil_w = k.V0 * base_w

                def nonlocal_quadrature(x, offsets=offsets, stencil_w=stencil_w):
                    return _kernels.apply_stencil(x, offsets, stencil_w, periodic)
                callables.append(nonlocal_quadrature)
            else:
                matrix = H.nonlocal_kernel.matrix
                if grid.dim != 1 or matrix.shape[0] != grid.points[0]:
                    raise ConfigError("tabulated kernel does not fit this grid")
                dv = grid.cell_volume

                def nonlocal_tabulated(x, matrix=matrix, dv=dv):
                    return dv * (matrix @ x)
                callables.append(nonlocal_tabulated)

    if H.local.kind != "none":
        V = eval_local(H.local, grid, mass=m).values
        theta_on = any(t != 0.0 for t in H.nc.theta)
        if theta_on:
            grads = [g.values for g in local_gradient(H.local, grid, mass=m)]
            theta_m = H.nc.theta_matrix
            pairs = [
                (a, b, theta_m[a, b])
                for a in range(grid.dim)
                for b in range(grid.dim)
                if a != b and theta_m[a, b] != 0.0
            ]

            def local_star(x, V=V, grads=grads, pairs=pairs):
                out = V * x
                dpsi = {}
                for a, b, t in pairs:
                    if b not in dpsi:
                        dpsi[b] = gradient_values(x, grid, b)
                    out = out + 0.5j * t * grads[a] * dpsi[b]
                return out
            callables.append(local_star)
        else:
            def local_multiply(x, V=V):
                return V * x
            callables.append(local_multiply)

    return _BoundHamiltonian(grid, k_symbol, tuple(callables))


def apply_hamiltonian(H: HamiltonianSpec, psi: ComplexField) -> ComplexField:
    """H psi with the commutative limit recovered exactly at theta = eta = 0."""
    bound = _bound_operator(H, psi.grid)
    return ComplexField(psi.grid, bound.apply(psi.values), _copy=False)


def fl_expansion_error(psi: ComplexField, V0: float, beta: float, nc: NCParams,
                       m: float, hbar: float) -> float:
    """Relative L2 distance between the exact Gaussian-kernel operator and its
    linearized form, with the eta.L piece applied as a first-order factor.

    Quantifies the validity condition (p^2 - (2/hbar) L.eta) << 4 hbar^2 / beta^2;
    the answer is ~ (k beta / 2)^4 / 2 deep inside the regime and O(1) outside.
    """
    del m  # the regime condition does not involve the mass
    grid = psi.grid
    grid._require_periodic("fl_expansion_error")
    if hbar != nc.hbar:
        raise ConfigError("hbar mismatch with NCParams")
    k2 = np.zeros(grid.shape)
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.points[axis]
        k2 = k2 + grid.wavenumbers(axis).reshape(shape) ** 2
    x = beta ** 2 * k2 / 4.0

    vals = psi.values
    eta_on = any(e != 0.0 for e in nc.eta)
    if eta_on:
        eta_l = eta_dot_l_values(vals, grid, nc)
        vals_eta = vals + (beta ** 2 / (2.0 * hbar ** 3)) * eta_l
    else:
        eta_l = 0.0
        vals_eta = vals

    exact = V0 * np.fft.ifftn(np.exp(-x) * np.fft.fftn(vals_eta))
    linear = V0 * np.fft.ifftn((1.0 - x) * np.fft.fftn(vals))
    if eta_on:
        linear = linear + V0 * (beta ** 2 / (2.0 * hbar ** 3)) * eta_l

    denom = np.linalg.norm(exact)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(exact - linear) / denom)


# ---------------------------------------------------------------------------
# Propagation.

MODES = ("real-time", "imaginary-time")
SCHEMES = ("crank-nicolson", "split-step")


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float
    mode: str = "real-time"
    scheme: str = "crank-nicolson"
    solver_tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.solver_tol < 1e-6:
            raise ConfigError("solver_tol must lie in (0, 1e-6)")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")


class Propagator:
    """Owns one evolving state; single writer, fresh output per step."""

    def __init__(self, H: HamiltonianSpec, cfg: PropagatorConfig, psi0: ComplexField,
                 require_normalized: bool = True):
        self.H = H
        self.cfg = cfg
        self.grid = psi0.grid
        self._bound = _bound_operator(H, self.grid)
        self._values = np.array(psi0.values, dtype=np.complex128)
        self.t = 0.0
        self.steps_taken = 0

        if cfg.mode == "real-time" and require_normalized:
            norm2 = self.grid.cell_volume * float(np.sum(np.abs(self._values) ** 2))
            if abs(norm2 - 1.0) > 1e-8:
                raise ConfigError(f"real-time propagation expects a normalized state, "
                                  f"got |psi|^2 integral = {norm2!r}")

        scale = self._bound.scale_estimate() + self._local_scale()
        if cfg.dt * scale >= 1.0:
            warnings.warn(
                f"dt * |H| estimate = {cfg.dt * scale:.3g} >= 1; time stepping may be "
                "inaccurate", stacklevel=2)

        if cfg.scheme == "split-step" and cfg.mode == "real-time":
            self._init_split_step()
        else:
            self._alpha = cfg.dt / (2.0 * H.hbar)
            self._precond_k = None
            if self._bound.k_symbol is not None and not self._bound.is_momentum_diagonal:
                self._precond_k = 1.0 / (1.0 + 1j * self._alpha * self._bound.k_symbol)

    def _local_scale(self) -> float:
        if self.H.local.kind == "none":
            return 0.0
        return float(np.abs(eval_local(self.H.local, self.grid, mass=self.H.mass).values).max())

    def _init_split_step(self):
        self.grid._require_periodic("split-step propagation")
        if not self.H.nc.is_commutative:
            raise ConfigError("split-step cannot represent theta/eta terms; "
                              "use crank-nicolson")
        if self._bound.callables and not (
            len(self._bound.callables) == 1 and self.H.local.kind != "none"
        ):
            raise ConfigError("split-step requires a momentum-diagonal + "
                              "position-diagonal Hamiltonian")
        dt, hbar = self.cfg.dt, self.H.hbar
        self._exp_kinetic = np.exp(-1j * dt / hbar * self._bound.k_symbol)
        if self.H.local.kind != "none":
            V = eval_local(self.H.local, self.grid, mass=self.H.mass).values
            self._exp_half_v = np.exp(-0.5j * dt / hbar * V)
        else:
            self._exp_half_v = None

    @property
    def psi(self) -> ComplexField:
        return ComplexField(self.grid, self._values)

    def step(self) -> ComplexField:
        if self.cfg.mode == "imaginary-time":
            self._values = self._imaginary_step(self._values)
        elif self.cfg.scheme == "split-step":
            self._values = self._split_step(self._values)
        else:
            self._values = self._crank_nicolson_step(self._values)
        self.t += self.cfg.dt
        self.steps_taken += 1
        return self.psi

    def _imaginary_step(self, values: np.ndarray) -> np.ndarray:
        out = values - (self.cfg.dt / self.H.hbar) * self._bound.apply(values)
        norm2 = self.grid.cell_volume * float(np.sum(np.abs(out) ** 2))
        if norm2 <= 0.0:
            raise SolverError("imaginary-time step annihilated the state")
        return out / np.sqrt(norm2)

    def _split_step(self, values: np.ndarray) -> np.ndarray:
        v = values if self._exp_half_v is None else self._exp_half_v * values
        v = np.fft.ifftn(self._exp_kinetic * np.fft.fftn(v))
        if self._exp_half_v is not None:
            v = self._exp_half_v * v
        return v

    def _crank_nicolson_step(self, values: np.ndarray) -> np.ndarray:
        alpha = self._alpha
        bound = self._bound
        if bound.is_momentum_diagonal:
            s = bound.k_symbol
            vhat = np.fft.fftn(values)
            return np.fft.ifftn(vhat * (1.0 - 1j * alpha * s) / (1.0 + 1j * alpha * s))

        rhs = values - 1j * alpha * bound.apply(values)
        n = values.size
        shape = values.shape

        def matvec(x):
            xg = x.reshape(shape)
            return (xg + 1j * alpha * bound.apply(xg)).ravel()

        A = LinearOperator((n, n), matvec=matvec, dtype=np.complex128)
        M = None
        if self._precond_k is not None:
            pk = self._precond_k

            def pre(x):
                return np.fft.ifftn(pk * np.fft.fftn(x.reshape(shape))).ravel()
            M = LinearOperator((n, n), matvec=pre, dtype=np.complex128)

        x, info = gmres(A, rhs.ravel(), x0=values.ravel(), rtol=self.cfg.solver_tol,
                        atol=0.0, restart=50, maxiter=self.cfg.max_iter, M=M)
        if info != 0:
            resid = np.linalg.norm(matvec(x) - rhs.ravel()) / np.linalg.norm(rhs)
            raise SolverError(
                f"Crank-Nicolson solve did not converge (info={info}); "
                f"relative residual {resid:.3e} vs tolerance {self.cfg.solver_tol:.1e}"
            )
        return x.reshape(shape)


def step(psi: ComplexField, H: HamiltonianSpec, cfg: PropagatorConfig) -> ComplexField:
    """One-shot single step; see Propagator for stateful evolution."""
    return Propagator(H, cfg, psi, require_normalized=False).step()


# ---------------------------------------------------------------------------
# Stationary states by imaginary time.

def rotate_quarter_turn(values: np.ndarray) -> np.ndarray:
    """Rotate a square periodic 2D field by +90 degrees about the box center."""
    n = values.shape[0]
    cols = (n - np.arange(n)) % n
    return values[:, cols].T.copy()


def project_lz_sector(values: np.ndarray, sector: int) -> np.ndarray:
    """Project onto the C4 rotation eigenspace containing L_z = sector states.

    Exact on square periodic grids; distinguishes sectors mod 4.
    """
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ConfigError("L_z sector projection needs a square 2D grid")
    out = np.zeros(values.shape, dtype=np.complex128)
    rotated = np.asarray(values, dtype=np.complex128)
    for k in range(4):
        out += (1j ** (sector * k)) * rotated
        if k < 3:
            rotated = rotate_quarter_turn(rotated)
    return out / 4.0


def ground_state(H: HamiltonianSpec, cfg: PropagatorConfig, psi0: ComplexField,
                 energy_tol: float = 1e-10, residual_tol: float | None = None,
                 max_steps: int = 200_000, lz_sector: int | None = None,
                 ) -> tuple[ComplexField, float]:
    """Lowest state reachable by imaginary-time iteration from psi0.

    Stops when the energy change per step falls below ``energy_tol`` and,
    if given, the eigen-residual |H psi - E psi| falls below ``residual_tol``
    (use the latter when the returned state must be stationary to high
    accuracy).  ``lz_sector`` re-projects onto a C4 rotation sector each step,
    which pins circulating stationary states on square 2D grids.
    """
    if not H.is_hermitian:
        raise ConfigError("ground_state requires a Hermitian Hamiltonian")
    grid = psi0.grid
    if lz_sector is not None:
        if grid.dim != 2 or grid.points[0] != grid.points[1] \
                or grid.extent[0] != grid.extent[1] or grid.boundary != PERIODIC:
            raise ConfigError("lz_sector projection needs a square periodic 2D grid")
    bound = _bound_operator(H, grid)
    dv = grid.cell_volume
    tau = cfg.dt / H.hbar

    values = np.array(psi0.values, dtype=np.complex128)
    if lz_sector is not None:
        values = project_lz_sector(values, lz_sector)
    norm2 = dv * float(np.sum(np.abs(values) ** 2))
    if norm2 <= 0.0:
        raise ConfigError("initial state has zero overlap with the requested sector")
    values /= np.sqrt(norm2)

    energy = np.inf
    for _ in range(max_steps):
        h_values = bound.apply(values)
        new_energy = dv * float(np.real(np.vdot(values, h_values)))
        residual = float(np.sqrt(dv) * np.linalg.norm(h_values - new_energy * values))
        converged = abs(energy - new_energy) < energy_tol
        if residual_tol is not None:
            converged = converged and residual < residual_tol
        energy = new_energy
        if converged:
            break
        values = values - tau * h_values
        if lz_sector is not None:
            values = project_lz_sector(values, lz_sector)
        norm2 = dv * float(np.sum(np.abs(values) ** 2))
        if norm2 <= 0.0:
            raise SolverError("imaginary-time iteration annihilated the state")
        values /= np.sqrt(norm2)
    else:
        raise SolverError(
            f"imaginary time did not converge within {max_steps} steps "
            f"(last energy change {abs(energy - new_energy):.3e})"
        )
    return ComplexField(grid, values, normalized=True), energy
