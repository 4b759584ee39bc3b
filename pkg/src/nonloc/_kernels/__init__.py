"""Backend selection for the stencil convolution hot kernel.

The compiled Cython extension is preferred when it built successfully;
otherwise the NumPy fallback is used.  Set ``NONLOC_KERNELS=numpy`` to force
the fallback (useful for benchmarking the two side by side).
"""

from __future__ import annotations

import os

import numpy as np

from . import reference

try:
    from . import _stencil_cy
except ImportError:  # extension not built; pure-Python install
    _stencil_cy = None

HAVE_COMPILED = _stencil_cy is not None

if os.environ.get("NONLOC_KERNELS", "").lower() == "numpy":
    DEFAULT_BACKEND = "numpy"
else:
    DEFAULT_BACKEND = "compiled" if HAVE_COMPILED else "numpy"


def backend_name() -> str:
    return DEFAULT_BACKEND


def apply_stencil(values: np.ndarray, offsets: np.ndarray, weights: np.ndarray,
                  periodic: bool, backend: str | None = None) -> np.ndarray:
    """out[i] = sum_m weights[m] * values[i + offsets[m]], wrapped or clipped."""
    chosen = backend or DEFAULT_BACKEND
    if chosen == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled stencil backend requested but not built")
        return _stencil_cy.apply_stencil(values, offsets, weights, periodic)
    if chosen == "numpy":
        return reference.apply_stencil(values, offsets, weights, periodic)
    raise ValueError(f"unknown stencil backend {chosen!r}")
