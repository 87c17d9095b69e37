# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled batched quadratic-form kernel.

Same contract as qiplab._quadform_py.quad_forms; the triple loop avoids the
(K, N, d) temporaries that the einsum fallback materializes, which is what
makes dense nets over many response maps cheap.
"""

import numpy as np


def quad_forms(const double complex[:, :, ::1] ops, const double complex[:, ::1] states):
    cdef Py_ssize_t nops = ops.shape[0]
    cdef Py_ssize_t dim = ops.shape[1]
    cdef Py_ssize_t nstates = states.shape[0]
    out_arr = np.empty((nops, nstates), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k, n, i, j
    cdef double complex acc, row
    for k in range(nops):
        for n in range(nstates):
            acc = 0
            for i in range(dim):
                row = 0
                for j in range(dim):
                    row = row + ops[k, i, j] * states[n, j]
                acc = acc + states[n, i].conjugate() * row
            out[k, n] = acc.real
    return out_arr
