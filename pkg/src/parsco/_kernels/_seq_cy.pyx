# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython kernel for the sequential rank-1 recurrence.

Same contract as ``_seq_np.recurrence_seq``; arithmetic is performed in the
identical order (dot, axpy, scale, add) so both kernels agree bit-for-bit on
typical inputs and always to reassociation tolerance.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def recurrence_seq(cnp.ndarray[cnp.float64_t, ndim=1] x0,
                   cnp.ndarray[cnp.float64_t, ndim=1] c,
                   cnp.ndarray[cnp.float64_t, ndim=2] u,
                   cnp.ndarray[cnp.float64_t, ndim=2] v,
                   cnp.ndarray[cnp.float64_t, ndim=2] w):
    cdef Py_ssize_t T = c.shape[0]
    cdef Py_ssize_t d = x0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((T, d), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = x0.copy()
    cdef Py_ssize_t t, i
    cdef double dot, ct
    for t in range(T):
        dot = 0.0
        for i in range(d):
            dot += v[t, i] * x[i]
        ct = c[t]
        for i in range(d):
            x[i] = ct * (x[i] - u[t, i] * dot) + w[t, i]
            out[t, i] = x[i]
    return out
