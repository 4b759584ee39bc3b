# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stencil convolution: the hot kernel of non-local operator application.

Same contract as nonloc._kernels.reference.apply_stencil.  Periodic wrap is
handled by splitting the innermost axis into two contiguous runs per offset,
keeping the inner loops unit-stride so the compiler can vectorize them.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def apply_stencil(values, offsets, weights, bint periodic):
    values = np.ascontiguousarray(values, dtype=np.complex128)
    cdef cnp.ndarray off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.ndarray w = np.ascontiguousarray(weights, dtype=np.float64)
    out = np.zeros_like(values)
    if values.ndim == 1:
        _apply_1d(values, off, w, periodic, out)
    elif values.ndim == 2:
        _apply_2d(values, off, w, periodic, out)
    elif values.ndim == 3:
        _apply_3d(values, off, w, periodic, out)
    else:
        raise ValueError("only 1D/2D/3D fields are supported")
    return out


cdef inline Py_ssize_t _wrap(Py_ssize_t o, Py_ssize_t n) noexcept nogil:
    # Normalize an offset (|o| < n) into [0, n).
    if o < 0:
        return o + n
    if o >= n:
        return o - n
    return o


cdef void _axpy_run(double complex* dst, const double complex* src, double wm,
                    Py_ssize_t count) noexcept nogil:
    # Real-weight times complex data: interleaved real/imag views make this a
    # plain real AXPY, which the compiler vectorizes.
    cdef double* d = <double*> dst
    cdef const double* s = <const double*> src
    cdef Py_ssize_t i
    for i in range(2 * count):
        d[i] = d[i] + wm * s[i]


cdef void _apply_1d(const double complex[::1] v, const long[:, ::1] off,
                    const double[::1] w, bint periodic,
                    double complex[::1] out) noexcept nogil:
    cdef Py_ssize_t n0 = v.shape[0]
    cdef Py_ssize_t m, o0, split, lo, hi
    cdef double wm
    for m in range(off.shape[0]):
        wm = w[m]
        o0 = off[m, 0]
        if periodic:
            o0 = _wrap(o0, n0)
            split = n0 - o0
            _axpy_run(&out[0], &v[o0], wm, split)
            if o0 > 0:
                _axpy_run(&out[split], &v[0], wm, o0)
        else:
            lo = 0 if o0 >= 0 else -o0
            hi = n0 if o0 <= 0 else n0 - o0
            if hi > lo:
                _axpy_run(&out[lo], &v[lo + o0], wm, hi - lo)


cdef void _apply_2d(const double complex[:, ::1] v, const long[:, ::1] off,
                    const double[::1] w, bint periodic,
                    double complex[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1]
    cdef Py_ssize_t m, i0, j0, o0, o1, split1
    cdef Py_ssize_t lo0, hi0, lo1, hi1
    cdef double wm
    for m in range(off.shape[0]):
        wm = w[m]
        o0 = off[m, 0]
        o1 = off[m, 1]
        if periodic:
            o0 = _wrap(o0, n0)
            o1 = _wrap(o1, n1)
            split1 = n1 - o1
            for i0 in range(n0):
                j0 = i0 + o0
                if j0 >= n0:
                    j0 -= n0
                _axpy_run(&out[i0, 0], &v[j0, o1], wm, split1)
                if o1 > 0:
                    _axpy_run(&out[i0, split1], &v[j0, 0], wm, o1)
        else:
            lo0 = 0 if o0 >= 0 else -o0
            hi0 = n0 if o0 <= 0 else n0 - o0
            lo1 = 0 if o1 >= 0 else -o1
            hi1 = n1 if o1 <= 0 else n1 - o1
            if hi1 > lo1:
                for i0 in range(lo0, hi0):
                    _axpy_run(&out[i0, lo1], &v[i0 + o0, lo1 + o1], wm, hi1 - lo1)


cdef void _apply_3d(const double complex[:, :, ::1] v, const long[:, ::1] off,
                    const double[::1] w, bint periodic,
                    double complex[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1], n2 = v.shape[2]
    cdef Py_ssize_t m, i0, i1, j0, j1, o0, o1, o2, split2
    cdef Py_ssize_t lo0, hi0, lo1, hi1, lo2, hi2
    cdef double wm
    for m in range(off.shape[0]):
        wm = w[m]
        o0 = off[m, 0]
        o1 = off[m, 1]
        o2 = off[m, 2]
        if periodic:
            o0 = _wrap(o0, n0)
            o1 = _wrap(o1, n1)
            o2 = _wrap(o2, n2)
            split2 = n2 - o2
            for i0 in range(n0):
                j0 = i0 + o0
                if j0 >= n0:
                    j0 -= n0
                for i1 in range(n1):
                    j1 = i1 + o1
                    if j1 >= n1:
                        j1 -= n1
                    _axpy_run(&out[i0, i1, 0], &v[j0, j1, o2], wm, split2)
                    if o2 > 0:
                        _axpy_run(&out[i0, i1, split2], &v[j0, j1, 0], wm, o2)
        else:
            lo0 = 0 if o0 >= 0 else -o0
            hi0 = n0 if o0 <= 0 else n0 - o0
            lo1 = 0 if o1 >= 0 else -o1
            hi1 = n1 if o1 <= 0 else n1 - o1
            lo2 = 0 if o2 >= 0 else -o2
            hi2 = n2 if o2 <= 0 else n2 - o2
            if hi2 > lo2:
                for i0 in range(lo0, hi0):
                    for i1 in range(lo1, hi1):
                        _axpy_run(&out[i0, i1, lo2], &v[i0 + o0, i1 + o1, lo2 + o2],
                                  wm, hi2 - lo2)
