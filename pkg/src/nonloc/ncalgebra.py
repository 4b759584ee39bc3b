"""Phase-space non-commutativity: parameters, first-order star product, and
the angular-momentum kinetic correction.

Both parameter matrices use the uniform convention M_ij = eps_ijk v_k; the
factor bookkeeping of the momentum-sector correction is carried explicitly in
the operator formula (p_nc^2 = p^2 - (2/hbar) L.eta), so no doubled matrix
convention appears anywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fieldlab import ComplexField, Grid, gradient_values, laplacian_values

# Experimental bounds usable as preset magnitudes (SI units).
THETA_BOUND_M2 = 4.0e-40
ETA_BOUND_KG2M2S2 = 1.76e-61
HBAR_SI = 1.0546e-34

XI_WARN = 1e-2

_ZERO3 = (0.0, 0.0, 0.0)


def _eps_matrix(vec: tuple[float, float, float]) -> np.ndarray:
    """M_ij = eps_ijk v_k; exactly antisymmetric by construction."""
    vx, vy, vz = vec
    return np.array([
        [0.0, vz, -vy],
        [-vz, 0.0, vx],
        [vy, -vx, 0.0],
    ])


@dataclass(frozen=True)
class NCParams:
    """Non-commutativity vectors Theta_k (length^2) and eta_k (momentum^2)."""

    theta: tuple[float, float, float] = _ZERO3
    eta: tuple[float, float, float] = _ZERO3
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        object.__setattr__(self, "eta", tuple(float(v) for v in self.eta))
        if len(self.theta) != 3 or len(self.eta) != 3:
            raise ConfigError("theta and eta must be 3-vectors")
        if self.hbar <= 0:
            raise ConfigError("hbar must be positive")

    @property
    def theta_matrix(self) -> np.ndarray:
        return _eps_matrix(self.theta)

    @property
    def eta_matrix(self) -> np.ndarray:
        return _eps_matrix(self.eta)

    @property
    def xi(self) -> float:
        """Tr(Theta.eta) / 4 hbar^2, recomputed from the matrices."""
        return float(np.trace(self.theta_matrix @ self.eta_matrix) / (4.0 * self.hbar ** 2))

    @property
    def hbar_eff(self) -> float:
        return self.hbar * (1.0 + self.xi)

    @property
    def is_commutative(self) -> bool:
        return all(v == 0.0 for v in self.theta) and all(v == 0.0 for v in self.eta)

    @classmethod
    def commutative(cls, hbar: float = 1.0) -> "NCParams":
        return cls(hbar=hbar)

    @classmethod
    def z_only(cls, theta_z: float, eta_z: float, hbar: float = 1.0) -> "NCParams":
        return cls(theta=(0.0, 0.0, theta_z), eta=(0.0, 0.0, eta_z), hbar=hbar)


def validate_nc_params(theta, eta, hbar: float = 1.0, dim: int = 3) -> NCParams:
    """Construct NCParams, enforcing the consistency condition and dim rules.

    Grids with dim < 3 only admit the out-of-plane components: dim=2 keeps
    Theta_z/eta_z, dim=1 requires Theta = eta = 0 (a 1x1 antisymmetric matrix
    is zero, so no correction could act anyway).
    """
    params = NCParams(theta=tuple(theta), eta=tuple(eta), hbar=hbar)
    if dim == 1 and not params.is_commutative:
        raise ConfigError("1D grids require theta = eta = 0")
    if dim == 2:
        for name, vec in (("theta", params.theta), ("eta", params.eta)):
            if vec[0] != 0.0 or vec[1] != 0.0:
                raise ConfigError(f"2D grids admit only the z component of {name}")
    xi = params.xi
    if abs(xi) >= 1.0:
        raise ConfigError(f"inconsistent parameters: |xi| = {abs(xi)} >= 1")
    if abs(xi) > XI_WARN:
        warnings.warn(f"xi = {xi:.3g} is large; first-order truncation is dubious",
                      stacklevel=2)
    return params


def _check_theta_usable(nc: NCParams, grid: Grid):
    if grid.dim == 1:
        raise ConfigError("star-product corrections need a grid with dim >= 2")
    if grid.dim == 2 and (nc.theta[0] != 0.0 or nc.theta[1] != 0.0):
        raise ConfigError("in-plane theta components are not representable on a 2D grid")


def _star_correction(fa_vals, fb_vals, nc: NCParams, grid: Grid,
                     grad_a=None) -> np.ndarray:
    """(i/2) Theta_ab (d_a f)(d_b g) summed over grid axes."""
    theta_m = nc.theta_matrix
    if grad_a is None:
        grad_a = [gradient_values(fa_vals, grid, ax) for ax in range(grid.dim)]
    grad_b = [gradient_values(fb_vals, grid, ax) for ax in range(grid.dim)]
    out = np.zeros(grid.shape, dtype=np.complex128)
    for a in range(grid.dim):
        for b in range(grid.dim):
            if a == b or theta_m[a, b] == 0.0:
                continue
            out += theta_m[a, b] * grad_a[a] * grad_b[b]
    return 0.5j * out


def star_apply_local(V: ComplexField, psi: ComplexField, nc: NCParams,
                     grad_v: tuple[ComplexField, ...] | None = None) -> ComplexField:
    """V*psi plus the first-order star correction (i/2) Theta_ab d_aV d_b psi.

    ``grad_v`` supplies an analytic gradient of V; without it the spectral/FD
    gradient is used, which assumes V is representable on the grid (periodic
    potentials must actually be periodic).
    """
    grid = psi.grid
    if all(t == 0.0 for t in nc.theta):
        return ComplexField(grid, V.values * psi.values, _copy=False)
    _check_theta_usable(nc, grid)
    grads = None if grad_v is None else [g.values for g in grad_v]
    corr = _star_correction(V.values, psi.values, nc, grid, grad_a=grads)
    return ComplexField(grid, V.values * psi.values + corr, _copy=False)


def star_product_first_order(f: ComplexField, g: ComplexField, nc: NCParams) -> ComplexField:
    """f*g + (i/2) Theta_ab d_a f d_b g, the first-order Moyal product."""
    if f.grid is not g.grid and f.grid != g.grid:
        raise ValueError("star product needs both fields on one grid")
    grid = f.grid
    if all(t == 0.0 for t in nc.theta):
        return ComplexField(grid, f.values * g.values, _copy=False)
    _check_theta_usable(nc, grid)
    corr = _star_correction(f.values, g.values, nc, grid)
    return ComplexField(grid, f.values * g.values + corr, _copy=False)


def _lz_values(values: np.ndarray, grid: Grid, hbar: float,
               axes: tuple[int, int]) -> np.ndarray:
    """-i hbar (x_a d_b - x_b d_a) psi for the in-plane axis pair (a, b)."""
    a, b = axes
    coords = grid.coordinate_arrays()
    return -1j * hbar * (
        coords[a] * gradient_values(values, grid, b)
        - coords[b] * gradient_values(values, grid, a)
    )


def angular_momentum_apply(psi: ComplexField, hbar: float = 1.0):
    """L_z psi for 2D grids; the (L_x, L_y, L_z) triple for 3D grids.

    Coordinates are box-centered, so L is measured about the box center.
    """
    grid = psi.grid
    if grid.dim == 1:
        raise ConfigError("angular momentum needs a grid with dim >= 2")
    if grid.dim == 2:
        return ComplexField(grid, _lz_values(psi.values, grid, hbar, (0, 1)), _copy=False)
    pairs = ((1, 2), (2, 0), (0, 1))  # L_x, L_y, L_z
    return tuple(
        ComplexField(grid, _lz_values(psi.values, grid, hbar, p), _copy=False) for p in pairs
    )


def eta_dot_l_values(values: np.ndarray, grid: Grid, nc: NCParams) -> np.ndarray:
    """sum_k eta_k L_k psi as raw values; zero array when eta vanishes."""
    if all(e == 0.0 for e in nc.eta):
        return np.zeros(grid.shape, dtype=np.complex128)
    if grid.dim == 1:
        raise ConfigError("eta.L corrections need a grid with dim >= 2")
    if grid.dim == 2:
        if nc.eta[0] != 0.0 or nc.eta[1] != 0.0:
            raise ConfigError("in-plane eta components are not representable on a 2D grid")
        return nc.eta[2] * _lz_values(values, grid, nc.hbar, (0, 1))
    out = np.zeros(grid.shape, dtype=np.complex128)
    for eta_k, axes in zip(nc.eta, ((1, 2), (2, 0), (0, 1))):
        if eta_k != 0.0:
            out += eta_k * _lz_values(values, grid, nc.hbar, axes)
    return out


def nc_kinetic_apply(psi: ComplexField, nc: NCParams, m: float) -> ComplexField:
    """(1/2m) [ -hbar^2 lap(psi) - (2/hbar) eta.L psi ].

    Reduces to the free kinetic term when eta = 0; self-adjoint for real eta,
    which is what protects norm conservation under real-time evolution.
    """
    grid = psi.grid
    hbar = nc.hbar
    out = -(hbar ** 2) * laplacian_values(psi.values, grid)
    if any(e != 0.0 for e in nc.eta):
        out = out - (2.0 / hbar) * eta_dot_l_values(psi.values, grid, nc)
    return ComplexField(grid, out / (2.0 * m), _copy=False)
