"""NumPy fallback for the stencil convolution kernel.

Semantics (shared with the compiled backend):

    out[i] = sum_m weights[m] * values[i + offsets[m]]

with wrap-around indexing on periodic grids and out-of-range contributions
dropped on dirichlet-zero grids.  Offsets are applied in storage order on
both backends so results agree bit-for-bit up to FMA contraction.
"""

from __future__ import annotations

import numpy as np


def apply_stencil(values: np.ndarray, offsets: np.ndarray, weights: np.ndarray,
                  periodic: bool) -> np.ndarray:
    out = np.zeros_like(values)
    dim = values.ndim
    axes = tuple(range(dim))
    if periodic:
        for off, w in zip(offsets, weights):
            out += w * np.roll(values, shift=tuple(-int(o) for o in off), axis=axes)
        return out
    for off, w in zip(offsets, weights):
        src = []
        dst = []
        for axis in range(dim):
            o = int(off[axis])
            n = values.shape[axis]
            if abs(o) >= n:
                break
            src.append(slice(o, None) if o >= 0 else slice(None, o))
            dst.append(slice(None, n - o) if o >= 0 else slice(-o, None))
        else:
            out[tuple(dst)] += w * values[tuple(src)]
    return out
