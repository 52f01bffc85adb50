# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Bregman dissipation sums and hypodissipativity pairings."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

DEF QUADRATIC = 0
DEF ABSOLUTE = 1


cdef inline double _sgn(double v) noexcept nogil:
    return (v > 0) - (v < 0)


def bregman_coo(const cnp.int32_t[:] rows, const cnp.int32_t[:] cols,
                const double[:] vals, const double[:] u, int jcode):
    cdef Py_ssize_t k, n = vals.shape[0]
    cdef double acc = 0.0, ud, um, d
    if jcode != QUADRATIC and jcode != ABSOLUTE:
        raise ValueError(f"unknown j code {jcode}")
    with nogil:
        if jcode == QUADRATIC:
            for k in range(n):
                d = u[cols[k]] - u[rows[k]]
                acc += vals[k] * d * d
        else:
            for k in range(n):
                ud = u[rows[k]]
                um = u[cols[k]]
                acc += vals[k] * (fabs(um - 1.0) - fabs(ud - 1.0) - _sgn(ud - 1.0) * (um - ud))
    return acc


def sign_pairing(const double[:, ::1] BF, const double[:, ::1] F, const double[::1] wphi, double a):
    cdef Py_ssize_t i, k, n = F.shape[0], m = F.shape[1]
    s = np.zeros(m)
    norm = np.zeros(m)
    cdef double[:] s_v = s
    cdef double[:] n_v = norm
    cdef double f, w
    with nogil:
        # rows outer so both inputs are read contiguously
        for i in range(n):
            w = wphi[i]
            for k in range(m):
                f = F[i, k]
                s_v[k] += w * _sgn(f) * BF[i, k]
                n_v[k] += w * fabs(f)
        for k in range(m):
            s_v[k] -= a * n_v[k]
    return s, norm
