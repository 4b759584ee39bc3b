#!/usr/bin/env python3
"""Benchmark the non-local stencil kernel: compiled extension vs NumPy fallback.

The stencil convolution is the hot inner loop of quadrature-path evolution
(it runs once per GMRES matvec, several times per Crank-Nicolson step).

    python3 benchmarks/bench_stencil.py [--repeats 50]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from nonloc import _kernels
from nonloc.dynamics import HamiltonianSpec, Propagator, PropagatorConfig
from nonloc.fieldlab import ComplexField, Grid
from nonloc.potentials import LocalPotentialSpec, NonlocalKernelSpec, _fl_stencil

CASES = [
    ("1D  512 pts, beta=0.85", Grid(points=(512,), extent=(40.0,)), 0.85),
    ("2D  64^2,   beta=0.85", Grid(points=(64, 64), extent=(16.0, 16.0)), 0.85),
    ("2D 128^2,   beta=1.20", Grid(points=(128, 128), extent=(32.0, 32.0)), 1.2),
    ("3D  32^3,   beta=1.50", Grid(points=(32, 32, 32), extent=(14.0, 14.0, 14.0)), 1.5),
]


def time_apply(values, offsets, weights, backend, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        _kernels.apply_stencil(values, offsets, weights, True, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_stencil(repeats: int):
    backends = ["numpy"] + (["compiled"] if _kernels.HAVE_COMPILED else [])
    print(f"stencil apply (best of {repeats}); default backend: "
          f"{_kernels.backend_name()}\n")
    header = f"{'case':<26}{'offsets':>9}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, grid, beta in CASES:
        offsets, weights = _fl_stencil(beta, grid)
        rng = np.random.default_rng(0)
        values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        times = [time_apply(values, offsets, weights, b, repeats) for b in backends]
        row = f"{label:<26}{len(weights):>9}" + "".join(f"{t * 1e3:>11.3f} ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


def bench_propagation(steps: int = 20):
    """End-to-end check: quadrature-path Crank-Nicolson stepping, both backends."""
    if not _kernels.HAVE_COMPILED:
        print("\ncompiled backend not built; skipping propagation comparison")
        return

    grid = Grid(points=(64, 64), extent=(16.0, 16.0))
    H = HamiltonianSpec(
        mass=1.0, hbar=1.0,
        local=LocalPotentialSpec(kind="gaussian-well", depth=1.0, width=1.6),
        nonlocal_kernel=NonlocalKernelSpec.frahn_lemmer(0.5, 0.85),
        nonlocal_path="quadrature",
    )
    x, y = grid.coordinate_arrays()
    psi0 = ComplexField(
        grid, np.exp(-((x - 1) ** 2 + y ** 2) / 1.62 + 1j * (0.5 * x + 0.3 * y))
    ).normalize()
    cfg = PropagatorConfig(dt=2e-3, solver_tol=1e-13)

    print(f"\nCrank-Nicolson, 2D quadrature path, {steps} steps:")
    results = {}
    for backend in ("compiled", "numpy"):
        _kernels.DEFAULT_BACKEND = backend
        from nonloc.dynamics import _bound_operator
        _bound_operator.cache_clear()
        prop = Propagator(H, cfg, psi0)
        t0 = time.perf_counter()
        for _ in range(steps):
            prop.step()
        elapsed = time.perf_counter() - t0
        results[backend] = (elapsed, prop.psi.values)
        print(f"  {backend:>9}: {elapsed:.2f} s ({elapsed / steps * 1e3:.0f} ms/step)")
    _kernels.DEFAULT_BACKEND = "compiled"
    diff = np.abs(results["compiled"][1] - results["numpy"][1]).max()
    print(f"  final-state max deviation between backends: {diff:.2e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--steps", type=int, default=20)
    args = parser.parse_args()
    bench_stencil(args.repeats)
    bench_propagation(args.steps)


if __name__ == "__main__":
    main()
