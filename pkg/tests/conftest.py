"""Shared fixtures and oracle helpers.

Smooth random fields are built band-limited (Fourier noise under a hard
cutoff with Gaussian damping) so spectral identities hold to their analytic
accuracy and products stay representable on the grid.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from nonloc.fieldlab import ComplexField, Grid, RealField

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = REPO_ROOT / "scenarios"


def smooth_random_values(grid: Grid, seed: int, cutoff_frac: float = 0.3,
                         real: bool = False) -> np.ndarray:
    """Band-limited random field values with unit-ish amplitude."""
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    k2 = np.zeros(grid.shape)
    kc = np.inf
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.points[axis]
        k = 2.0 * np.pi * np.fft.fftfreq(grid.points[axis], d=grid.spacing[axis])
        k2 = k2 + k.reshape(shape) ** 2
        kc = min(kc, cutoff_frac * np.pi / grid.spacing[axis])
    damp = np.exp(-k2 / kc ** 2) * (k2 <= kc ** 2)
    values = np.fft.ifftn(coeffs * damp)
    values = values / np.abs(values).max()
    return values.real if real else values


def smooth_random_field(grid: Grid, seed: int, cutoff_frac: float = 0.3) -> ComplexField:
    return ComplexField(grid, smooth_random_values(grid, seed, cutoff_frac))


def smooth_random_real(grid: Grid, seed: int, cutoff_frac: float = 0.3) -> RealField:
    return RealField(grid, smooth_random_values(grid, seed, cutoff_frac, real=True))


@pytest.fixture(scope="session")
def scenario_runs(tmp_path_factory):
    """Run each shipped scenario once; tests share the summaries."""
    from nonloc.scenario import parse_config, run_scenario

    cache: dict[str, tuple[dict, Path]] = {}

    def run(name: str):
        if name not in cache:
            out = tmp_path_factory.mktemp(f"run-{name}")
            cfg = parse_config(SCENARIO_DIR / f"{name}.yaml")
            summary = run_scenario(cfg, out_dir=out)
            cache[name] = (summary, out)
        return cache[name]

    return run


@pytest.fixture(scope="session")
def stationary_nc_state():
    """Circulating stationary state of the full NC 2D Hamiltonian.

    Harmonic trap + Gaussian kernel with theta and eta active, converged in
    the L_z = 1 rotation sector until the eigen-residual is below 1e-8.
    """
    from nonloc.dynamics import HamiltonianSpec, PropagatorConfig, ground_state
    from nonloc.ncalgebra import validate_nc_params
    from nonloc.potentials import LocalPotentialSpec, NonlocalKernelSpec

    grid = Grid(points=(64, 64), extent=(16.0, 16.0))
    nc = validate_nc_params((0.0, 0.0, 0.1), (0.0, 0.0, 0.05), 1.0, dim=2)
    H = HamiltonianSpec(
        mass=1.0,
        hbar=1.0,
        local=LocalPotentialSpec(kind="harmonic", omega=1.0),
        nonlocal_kernel=NonlocalKernelSpec.frahn_lemmer(0.3, 0.85),
        nc=nc,
        nonlocal_path="momentum",
    )
    x, y = grid.coordinate_arrays()
    seed = ComplexField(grid, (x + 1j * y) * np.exp(-(x ** 2 + y ** 2) / 2.0))
    cfg = PropagatorConfig(dt=4e-3, mode="imaginary-time", solver_tol=1e-12)
    psi, energy = ground_state(H, cfg, seed, energy_tol=1e-13, residual_tol=1e-8,
                               lz_sector=1)
    return {"grid": grid, "H": H, "psi": psi, "energy": energy}
