"""Uniform Cartesian grids and the field operations everything else is built on.

Derivatives are spectral (FFT) on periodic grids and 2nd-order central
differences with zero ghost points on dirichlet-zero grids.  The momentum
transform is the unitary (1/sqrt(N)-symmetric) DFT.  Odd spectral derivatives
zero the Nyquist mode, and the spectral Laplacian is defined as the square of
that derivative so that ``laplacian == divergence(gradient(.))`` holds to
machine precision on periodic grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BoundaryError

PERIODIC = "periodic"
DIRICHLET = "dirichlet-zero"
BOUNDARIES = (PERIODIC, DIRICHLET)

# Hard cap so a typo'd config cannot try to allocate the universe.
MAX_TOTAL_POINTS = 1 << 26

NORMALIZED_TOL = 1e-10


def _as_tuple(value, dim_hint=None, cast=float):
    if np.isscalar(value):
        n = 1 if dim_hint is None else dim_hint
        return tuple(cast(value) for _ in range(n))
    return tuple(cast(v) for v in value)


@dataclass(frozen=True)
class Grid:
    """Uniform grid on a box centered at the origin.

    ``points`` counts stored samples per axis.  Periodic axes cover
    [-L/2, L/2) with spacing L/N; dirichlet-zero axes store only interior
    points of [-L/2, L/2] with spacing L/(N+1) and implicit zeros on the
    boundary.
    """

    points: tuple[int, ...]
    extent: tuple[float, ...]
    boundary: str = PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "points", _as_tuple(self.points, cast=int))
        object.__setattr__(
            self, "extent", _as_tuple(self.extent, dim_hint=len(self.points), cast=float)
        )
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}; expected one of {BOUNDARIES}")
        if len(self.points) != len(self.extent):
            raise ValueError("points and extent must have the same dimensionality")
        if not 1 <= len(self.points) <= 3:
            raise ValueError("only 1D, 2D and 3D grids are supported")
        if any(n < 4 for n in self.points):
            raise ValueError("every axis needs at least 4 points")
        if any(L <= 0 for L in self.extent):
            raise ValueError("extents must be positive")
        total = int(np.prod(self.points))
        if total <= 0 or total > MAX_TOTAL_POINTS:
            raise ValueError(f"total point count {total} exceeds the supported maximum")

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.boundary == PERIODIC:
            return tuple(L / n for L, n in zip(self.extent, self.points))
        return tuple(L / (n + 1) for L, n in zip(self.extent, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    def axis_coordinates(self, axis: int) -> np.ndarray:
        """Sample coordinates along one axis, box-centered."""
        self._check_axis(axis)
        n, L, h = self.points[axis], self.extent[axis], self.spacing[axis]
        if self.boundary == PERIODIC:
            return -0.5 * L + h * np.arange(n)
        return -0.5 * L + h * (1.0 + np.arange(n))

    def coordinate_arrays(self) -> tuple[np.ndarray, ...]:
        """Per-axis coordinates shaped for broadcasting against field values."""
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.points[axis]
            out.append(self.axis_coordinates(axis).reshape(shape))
        return tuple(out)

    def wavenumbers(self, axis: int) -> np.ndarray:
        """Angular wavenumbers in FFT ordering (periodic grids only)."""
        self._require_periodic("wavenumbers")
        self._check_axis(axis)
        return 2.0 * np.pi * np.fft.fftfreq(self.points[axis], d=self.spacing[axis])

    def deriv_wavenumbers(self, axis: int) -> np.ndarray:
        """Wavenumbers used for odd derivatives: Nyquist mode zeroed (even N)."""
        k = self.wavenumbers(axis).copy()
        n = self.points[axis]
        if n % 2 == 0:
            k[n // 2] = 0.0
        return k

    def _check_axis(self, axis: int):
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range for a {self.dim}D grid")

    def _require_periodic(self, what: str):
        if self.boundary != PERIODIC:
            raise BoundaryError(f"{what} requires a periodic grid, got {self.boundary!r}")


@lru_cache(maxsize=64)
def _deriv_k(grid: Grid, axis: int) -> np.ndarray:
    shape = [1] * grid.dim
    shape[axis] = grid.points[axis]
    k = grid.deriv_wavenumbers(axis).reshape(shape)
    k.flags.writeable = False
    return k


@lru_cache(maxsize=64)
def _laplacian_k2(grid: Grid) -> np.ndarray:
    k2 = sum(_deriv_k(grid, a) ** 2 for a in range(grid.dim))
    k2 = np.asarray(k2)
    k2.flags.writeable = False
    return k2


def _check_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains NaN or Inf")


class _FieldBase:
    """Shared wrapper: immutable values bound to a grid."""

    _dtype: type

    def __init__(self, grid: Grid, values, *, _copy: bool = True):
        # _copy=False still copies when dtype/layout conversion requires it.
        arr = np.array(values, dtype=self._dtype, order="C", copy=True if _copy else None)
        if arr.shape != self._expected_shape(grid):
            raise ValueError(
                f"values shape {arr.shape} does not match grid shape {self._expected_shape(grid)}"
            )
        _check_finite(arr, type(self).__name__)
        arr.flags.writeable = False
        self.grid = grid
        self.values = arr

    def _expected_shape(self, grid: Grid) -> tuple[int, ...]:
        return grid.shape

    def __repr__(self):
        return f"{type(self).__name__}(grid={self.grid.points}, boundary={self.grid.boundary})"


class RealField(_FieldBase):
    _dtype = np.float64


class ComplexField(_FieldBase):
    _dtype = np.complex128

    def __init__(self, grid: Grid, values, *, normalized: bool = False, _copy: bool = True):
        super().__init__(grid, values, _copy=_copy)
        self.normalized = normalized
        if normalized:
            total = grid.cell_volume * float(np.sum(np.abs(self.values) ** 2))
            if abs(total - 1.0) > NORMALIZED_TOL:
                raise ValueError(f"field flagged normalized but has norm^2 = {total!r}")

    def normalize(self) -> "ComplexField":
        total = self.grid.cell_volume * float(np.sum(np.abs(self.values) ** 2))
        if total <= 0.0:
            raise ValueError("cannot normalize a zero field")
        return ComplexField(
            self.grid, self.values / np.sqrt(total), normalized=True, _copy=False
        )


class VectorField(_FieldBase):
    """dim real components per point, stacked on the leading axis."""

    _dtype = np.float64

    def _expected_shape(self, grid: Grid) -> tuple[int, ...]:
        return (grid.dim,) + grid.shape

    def component(self, axis: int) -> RealField:
        self.grid._check_axis(axis)
        return RealField(self.grid, self.values[axis])


# ---------------------------------------------------------------------------
# Array-level operators (the field-level API wraps these).

def gradient_values(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    grid._check_axis(axis)
    if grid.boundary == PERIODIC:
        fhat = np.fft.fft(values, axis=axis)
        out = np.fft.ifft(1j * _deriv_k(grid, axis) * fhat, axis=axis)
        return out if np.iscomplexobj(values) else out.real
    return _central_difference(values, grid, axis)


def _central_difference(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    # Zero ghost values just outside the stored interior points.
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    half = 0.5 / grid.spacing[axis]
    out[1:-1] = (v[2:] - v[:-2]) * half
    out[0] = v[1] * half
    out[-1] = -v[-2] * half
    return np.moveaxis(out, 0, axis)


def laplacian_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.boundary == PERIODIC:
        fhat = np.fft.fftn(values)
        out = np.fft.ifftn(-_laplacian_k2(grid) * fhat)
        return out if np.iscomplexobj(values) else out.real
    out = np.zeros_like(values)
    for axis in range(grid.dim):
        v = np.moveaxis(values, axis, 0)
        o = np.moveaxis(out, axis, 0)
        inv_h2 = 1.0 / grid.spacing[axis] ** 2
        o[1:-1] += (v[2:] - 2.0 * v[1:-1] + v[:-2]) * inv_h2
        o[0] += (v[1] - 2.0 * v[0]) * inv_h2
        o[-1] += (v[-2] - 2.0 * v[-1]) * inv_h2
    return out


def integrate_values(values: np.ndarray, grid: Grid):
    # Riemann sum; on dirichlet-zero grids the trapezoid rule reduces to the
    # same sum because the boundary samples are identically zero.
    return grid.cell_volume * values.sum()


# ---------------------------------------------------------------------------
# Field-level API.

def gradient(f, axis: int):
    """d/dx_axis, spectral on periodic grids, 2nd-order central otherwise."""
    out = gradient_values(f.values, f.grid, axis)
    return type(f)(f.grid, out, _copy=False)


def divergence(v: VectorField) -> RealField:
    total = np.zeros(v.grid.shape)
    for axis in range(v.grid.dim):
        total += gradient_values(v.values[axis], v.grid, axis)
    return RealField(v.grid, total, _copy=False)


def laplacian(f):
    return type(f)(f.grid, laplacian_values(f.values, f.grid), _copy=False)


def to_momentum(f: ComplexField) -> ComplexField:
    """Unitary DFT of the sampled field (periodic grids only)."""
    f.grid._require_periodic("to_momentum")
    return ComplexField(f.grid, np.fft.fftn(f.values, norm="ortho"), _copy=False)


def from_momentum(f: ComplexField) -> ComplexField:
    f.grid._require_periodic("from_momentum")
    return ComplexField(f.grid, np.fft.ifftn(f.values, norm="ortho"), _copy=False)


def integrate(f):
    """Grid quadrature of the field; complex fields give a complex scalar."""
    result = integrate_values(f.values, f.grid)
    return complex(result) if np.iscomplexobj(f.values) else float(result)


def l2_norm(f) -> float:
    """Continuum-normalized L2 norm sqrt(integral |f|^2 dV)."""
    if isinstance(f, VectorField):
        density = np.sum(np.abs(f.values) ** 2, axis=0)
    else:
        density = np.abs(f.values) ** 2
    return float(np.sqrt(f.grid.cell_volume * density.sum()))


def zeros_like_real(grid: Grid) -> RealField:
    return RealField(grid, np.zeros(grid.shape), _copy=False)


def zeros_like_vector(grid: Grid) -> VectorField:
    return VectorField(grid, np.zeros((grid.dim,) + grid.shape), _copy=False)


# ---------------------------------------------------------------------------
# CSV dump format
#
#   # grid: dim=<d> points=<n0,...> extent=<L0,...> boundary=<b>
#   index_0,...,index_{d-1},re,im        (complex fields)
#   index_0,...,index_{d-1},value        (real fields)
#
# Numbers are written with 17 significant digits, which round-trips float64
# bit-exactly.

def _format_header(grid: Grid) -> str:
    pts = ",".join(str(n) for n in grid.points)
    ext = ",".join(f"{L:.17g}" for L in grid.extent)
    return f"# grid: dim={grid.dim} points={pts} extent={ext} boundary={grid.boundary}"


def _parse_header(line: str) -> Grid:
    if not line.startswith("# grid:"):
        raise ValueError("missing grid header in field file")
    entries = dict(tok.split("=", 1) for tok in line[len("# grid:"):].split())
    points = tuple(int(p) for p in entries["points"].split(","))
    extent = tuple(float(L) for L in entries["extent"].split(","))
    if int(entries["dim"]) != len(points):
        raise ValueError("inconsistent grid header")
    return Grid(points=points, extent=extent, boundary=entries["boundary"])


def write_field(f, path):
    if isinstance(f, VectorField):
        raise ValueError("dump scalar fields; write VectorField components separately")
    grid = f.grid
    complex_field = np.iscomplexobj(f.values)
    with open(path, "w") as fh:
        fh.write(_format_header(grid) + "\n")
        for idx in np.ndindex(grid.shape):
            head = ",".join(str(i) for i in idx)
            v = f.values[idx]
            if complex_field:
                fh.write(f"{head},{v.real:.17g},{v.imag:.17g}\n")
            else:
                fh.write(f"{head},{v:.17g}\n")


def read_field(path):
    with open(path) as fh:
        grid = _parse_header(fh.readline().rstrip("\n"))
        first_data = fh.readline()
        if not first_data:
            raise ValueError("field file has no data rows")
        n_cols = len(first_data.split(","))
        complex_field = n_cols == grid.dim + 2
        if not complex_field and n_cols != grid.dim + 1:
            raise ValueError(f"unexpected column count {n_cols} for a {grid.dim}D grid")
        dtype = np.complex128 if complex_field else np.float64
        values = np.zeros(grid.shape, dtype=dtype)
        line = first_data
        while line:
            parts = line.rstrip("\n").split(",")
            idx = tuple(int(p) for p in parts[: grid.dim])
            if complex_field:
                values[idx] = complex(float(parts[-2]), float(parts[-1]))
            else:
                values[idx] = float(parts[-1])
            line = fh.readline()
    cls = ComplexField if complex_field else RealField
    return cls(grid, values, _copy=False)
