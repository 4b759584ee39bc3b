"""Local potentials and non-local kernels, plus the dispersion relation.

The Gaussian non-local kernel

    K(r, r') = V0 * (pi beta^2)^(-dim/2) * exp(-|r - r'|^2 / beta^2)

is applied either by direct quadrature (a translation-invariant stencil,
minimum-image distances on periodic grids) or, on periodic grids, as the
momentum-space multiplier V0 * exp(-k^2 beta^2 / 4).  The normalization
prefactor generalizes the 3D form so the kernel integrates to V0 in any
dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import ConfigError, ResolutionError
from .fieldlab import ComplexField, Grid, PERIODIC

LOCAL_KINDS = ("none", "linear", "harmonic", "gaussian-well", "complex-absorber")

# Gaussian tails beyond this many widths are below double precision.
_TRUNCATION_WIDTHS = 6.0


@dataclass(frozen=True)
class LocalPotentialSpec:
    """Analytic local potential V_L(r); complex only for the absorber kind."""

    kind: str = "none"
    h: float = 0.0            # linear: V = h * x
    omega: float = 0.0        # harmonic: V = m omega^2 r^2 / 2
    depth: float = 0.0        # gaussian-well: V = -depth * exp(-r^2/width^2)
    width: float = 0.0
    W0: float = 0.0           # complex-absorber: V = -i W0 inside the region
    region: tuple[float, float] | None = None   # x-axis window; None = everywhere

    def __post_init__(self):
        if self.kind not in LOCAL_KINDS:
            raise ConfigError(f"unknown local potential kind {self.kind!r}")
        if self.kind == "harmonic" and self.omega < 0:
            raise ConfigError("harmonic omega must be non-negative")
        if self.kind == "gaussian-well" and self.width <= 0:
            raise ConfigError("gaussian-well width must be positive")
        if self.kind == "complex-absorber":
            if self.W0 < 0:
                raise ConfigError("absorber strength W0 must be >= 0")
            if self.region is not None:
                object.__setattr__(self, "region", (float(self.region[0]), float(self.region[1])))

    @property
    def is_real(self) -> bool:
        return self.kind != "complex-absorber" or self.W0 == 0.0


def eval_local(spec: LocalPotentialSpec, grid: Grid, mass: float = 1.0) -> ComplexField:
    """Sample V_L on the grid.  ``mass`` only enters the harmonic kind."""
    coords = grid.coordinate_arrays()
    if spec.kind == "none":
        values = np.zeros(grid.shape, dtype=np.complex128)
    elif spec.kind == "linear":
        values = (spec.h * coords[0]) * np.ones(grid.shape, dtype=np.complex128)
    elif spec.kind == "harmonic":
        r2 = sum(x ** 2 for x in coords)
        values = (0.5 * mass * spec.omega ** 2 * r2) * np.ones(grid.shape, dtype=np.complex128)
    elif spec.kind == "gaussian-well":
        r2 = sum(x ** 2 for x in coords)
        values = (-spec.depth * np.exp(-r2 / spec.width ** 2)).astype(np.complex128)
        values = values * np.ones(grid.shape)
    elif spec.kind == "complex-absorber":
        values = np.zeros(grid.shape, dtype=np.complex128)
        values -= 1j * spec.W0 * _absorber_mask(spec, grid)
    else:  # pragma: no cover - guarded in __post_init__
        raise ConfigError(spec.kind)
    return ComplexField(grid, values, _copy=False)


def _absorber_mask(spec: LocalPotentialSpec, grid: Grid) -> np.ndarray:
    if spec.region is None:
        return np.ones(grid.shape)
    x = grid.coordinate_arrays()[0]
    lo, hi = spec.region
    return ((x >= lo) & (x <= hi)) * np.ones(grid.shape)


def local_gradient(spec: LocalPotentialSpec, grid: Grid, mass: float = 1.0) -> tuple[ComplexField, ...]:
    """Analytic gradient of V_L, sampled per axis.

    Used instead of numerical differentiation so that potentials like h*x,
    which are not periodic functions on the box, do not pick up Gibbs
    artifacts.  The absorber's indicator jump is ignored (gradient 0),
    consistent with its piecewise-constant definition.
    """
    coords = grid.coordinate_arrays()
    ones = np.ones(grid.shape, dtype=np.complex128)
    if spec.kind == "linear":
        comps = [spec.h * ones] + [0.0 * ones for _ in range(grid.dim - 1)]
    elif spec.kind == "harmonic":
        comps = [mass * spec.omega ** 2 * x * ones for x in coords]
    elif spec.kind == "gaussian-well":
        r2 = sum(x ** 2 for x in coords)
        envelope = np.exp(-r2 / spec.width ** 2)
        comps = [(2.0 * spec.depth / spec.width ** 2) * x * envelope * ones for x in coords]
    else:  # none, complex-absorber
        comps = [0.0 * ones for _ in range(grid.dim)]
    return tuple(ComplexField(grid, c, _copy=False) for c in comps)


# ---------------------------------------------------------------------------
# Non-local kernels.

@dataclass(frozen=True, eq=False)
class NonlocalKernelSpec:
    """Kernel model for the non-local operator (Kpsi)(r) = int K(r,r') psi(r') dr'."""

    kind: str
    V0: float = 0.0
    beta: float = 0.0
    matrix: np.ndarray | None = None
    real_symmetric: bool = True

    def __post_init__(self):
        if self.kind == "frahn-lemmer":
            if self.beta <= 0:
                raise ConfigError("frahn-lemmer range beta must be positive")
        elif self.kind == "tabulated":
            m = np.asarray(self.matrix)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ConfigError("tabulated kernel must be a square matrix")
            if self.real_symmetric:
                if np.iscomplexobj(m) and np.abs(m.imag).max() > 1e-12:
                    raise ConfigError("kernel flagged real-symmetric has imaginary entries")
                if np.abs(m - m.T).max() > 1e-12:
                    raise ConfigError("kernel flagged real-symmetric is not symmetric")
            arr = np.array(m, dtype=np.complex128 if np.iscomplexobj(m) else np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, "matrix", arr)
        else:
            raise ConfigError(f"unknown non-local kernel kind {self.kind!r}")

    @classmethod
    def frahn_lemmer(cls, V0: float, beta: float) -> "NonlocalKernelSpec":
        return cls(kind="frahn-lemmer", V0=float(V0), beta=float(beta))

    @classmethod
    def tabulated(cls, matrix, real_symmetric: bool = True) -> "NonlocalKernelSpec":
        return cls(kind="tabulated", matrix=np.asarray(matrix), real_symmetric=real_symmetric)


def frahn_lemmer_eval(r, rp, V0: float, beta: float, dim: int) -> float:
    """Pointwise kernel value V0 (pi beta^2)^(-dim/2) exp(-|r-r'|^2/beta^2)."""
    if beta <= 0:
        raise ConfigError("frahn-lemmer range beta must be positive")
    d2 = np.sum((np.atleast_1d(np.asarray(r, dtype=float) - np.asarray(rp, dtype=float))) ** 2)
    return float(V0 * (np.pi * beta ** 2) ** (-dim / 2) * np.exp(-d2 / beta ** 2))


def _check_beta_resolvable(beta: float, grid: Grid):
    h_max = max(grid.spacing)
    if beta < 2.0 * h_max:
        raise ResolutionError(
            f"kernel range beta={beta} under-resolved: needs beta >= 2*spacing = {2 * h_max}"
        )
    if beta > min(grid.extent) / 8.0:
        raise ResolutionError(
            f"grid too narrow for beta={beta}: needs beta <= extent/8 = {min(grid.extent) / 8.0}"
        )


@lru_cache(maxsize=32)
def _fl_stencil(beta: float, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights H(|s|)*dV of the unit-strength Gaussian stencil.

    Periodic axes enumerate each wrap class once with its minimum-image
    displacement; dirichlet axes enumerate plain offsets (clipped at apply
    time).  Offsets beyond _TRUNCATION_WIDTHS * beta carry weights below
    double precision and are dropped.
    """
    _check_beta_resolvable(beta, grid)
    radius = _TRUNCATION_WIDTHS * beta
    reps = []
    for axis in range(grid.dim):
        n = grid.points[axis]
        h = grid.spacing[axis]
        if grid.boundary == PERIODIC:
            r = np.arange(-(n // 2), (n + 1) // 2)
        else:
            r = np.arange(-(n - 1), n)
        r = r[np.abs(r) * h <= radius]
        reps.append(r)
    mesh = np.meshgrid(*reps, indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    disp2 = np.zeros(len(offsets))
    for axis in range(grid.dim):
        disp2 += (offsets[:, axis] * grid.spacing[axis]) ** 2
    keep = disp2 <= radius ** 2
    offsets = np.ascontiguousarray(offsets[keep], dtype=np.int64)
    norm = (np.pi * beta ** 2) ** (-grid.dim / 2.0)
    weights = norm * np.exp(-disp2[keep] / beta ** 2) * grid.cell_volume
    weights = np.ascontiguousarray(weights)
    offsets.flags.writeable = False
    weights.flags.writeable = False
    return offsets, weights


def kernel_normalization(kernel: NonlocalKernelSpec, grid: Grid) -> float:
    """Quadrature of the kernel shape over r' at the grid center.

    For frahn-lemmer this is the integral of the unit-strength Gaussian
    (V0 excluded) and must come out 1 on a resolved grid; for tabulated
    kernels it is the raw center-row integral.
    """
    if kernel.kind == "frahn-lemmer":
        offsets, weights = _fl_stencil(kernel.beta, grid)
        if grid.boundary == PERIODIC:
            return float(weights.sum())
        center = np.array([n // 2 for n in grid.points])
        target = offsets + center
        valid = np.all((target >= 0) & (target < np.array(grid.points)), axis=1)
        return float(weights[valid].sum())
    if grid.dim != 1:
        raise ConfigError("tabulated kernels are 1D only")
    n = grid.points[0]
    if kernel.matrix.shape[0] != n:
        raise ValueError(
            f"tabulated kernel size {kernel.matrix.shape[0]} does not match grid with {n} points"
        )
    return float(np.real(kernel.matrix[n // 2, :].sum()) * grid.cell_volume)


def apply_nonlocal(kernel: NonlocalKernelSpec, psi: ComplexField,
                   backend: str | None = None) -> ComplexField:
    """Direct-quadrature action (K psi)(r) = sum_r' K(r,r') psi(r') dV."""
    grid = psi.grid
    if kernel.kind == "frahn-lemmer":
        offsets, weights = _fl_stencil(kernel.beta, grid)
        out = _kernels.apply_stencil(
            psi.values, offsets, kernel.V0 * weights, grid.boundary == PERIODIC,
            backend=backend,
        )
        return ComplexField(grid, out, _copy=False)
    if grid.dim != 1:
        raise ConfigError("tabulated kernels are 1D only")
    if kernel.matrix.shape[0] != grid.points[0]:
        raise ValueError(
            f"tabulated kernel size {kernel.matrix.shape[0]} does not match grid "
            f"with {grid.points[0]} points"
        )
    return ComplexField(grid, grid.cell_volume * (kernel.matrix @ psi.values), _copy=False)


def momentum_multiplier(V0: float, beta: float, grid: Grid) -> np.ndarray:
    """V0 * exp(-k^2 beta^2 / 4) over the grid's FFT modes."""
    grid._require_periodic("momentum kernel")
    k2 = np.zeros(grid.shape)
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.points[axis]
        k2 = k2 + grid.wavenumbers(axis).reshape(shape) ** 2
    return V0 * np.exp(-k2 * beta ** 2 / 4.0)


def apply_nonlocal_momentum(V0: float, beta: float, psi: ComplexField,
                            hbar: float = 1.0) -> ComplexField:
    """Gaussian kernel applied as its momentum-space form.

    With p = hbar*k the multiplier exp(-p^2 beta^2 / 4 hbar^2) reduces to
    exp(-k^2 beta^2 / 4); ``hbar`` is accepted for interface symmetry but
    cancels.
    """
    del hbar
    grid = psi.grid
    mult = momentum_multiplier(V0, beta, grid)
    out = np.fft.ifftn(mult * np.fft.fftn(psi.values))
    return ComplexField(grid, out, _copy=False)


# ---------------------------------------------------------------------------
# Dispersion relation E = (hbar k)^2 / 2m + V0 exp(-k^2 beta^2 / 4).

def _dispersion_residual(k, E, V0, beta, m, hbar):
    return E - (hbar * k) ** 2 / (2.0 * m) - V0 * np.exp(-(k ** 2) * beta ** 2 / 4.0)


def dispersion_solve(E: float, V0: float, beta: float, m: float = 1.0,
                     hbar: float = 1.0, scan_points: int = 4096) -> list[float]:
    """All k >= 0 solving the dispersion relation, ascending.

    Sign-bracketing scan over [0, k_max] with k_max = 4 sqrt(2m max(|E|,|V0|,1))/hbar,
    then bisection on each bracket.  Tangent roots without a sign change are
    not found; an empty list is a valid result.
    """
    if beta < 0 or m <= 0 or hbar <= 0:
        raise ConfigError("dispersion_solve needs beta >= 0, m > 0, hbar > 0")
    k_max = 4.0 * np.sqrt(2.0 * m * max(abs(E), abs(V0), 1.0)) / hbar
    ks = np.linspace(0.0, k_max, scan_points + 1)
    fs = _dispersion_residual(ks, E, V0, beta, m, hbar)

    roots = [float(k) for k, f in zip(ks, fs) if f == 0.0]
    for i in range(scan_points):
        fa, fb = fs[i], fs[i + 1]
        if fa == 0.0 or fb == 0.0 or fa * fb > 0.0:
            continue
        a, b = float(ks[i]), float(ks[i + 1])
        for _ in range(200):
            mid = 0.5 * (a + b)
            fm = _dispersion_residual(mid, E, V0, beta, m, hbar)
            if fm == 0.0 or (b - a) < 1e-16 * max(1.0, k_max):
                a = b = mid
                break
            if fa * fm < 0.0:
                b = mid
            else:
                a, fa = mid, fm
        roots.append(0.5 * (a + b))

    roots.sort()
    merged: list[float] = []
    tol = 1e-10 * max(1.0, k_max)
    for r in roots:
        if not merged or r - merged[-1] > tol:
            merged.append(r)
    return merged
