# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled 1-D convolution kernels (forward + both gradients).

Same contracts as bimoe._kernels._convnp: float64, stride 1, odd kernel,
"same" zero padding.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] kernels, double[::1] bias):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t Cout = kernels.shape[0], K = kernels.shape[2]
    cdef Py_ssize_t pad = (K - 1) // 2
    cdef Py_ssize_t b, o, i, t, j, src
    cdef double acc
    out_arr = np.empty((B, Cout, T), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for b in range(B):
            for o in range(Cout):
                for t in range(T):
                    acc = bias[o]
                    for i in range(Cin):
                        for j in range(K):
                            src = t + j - pad
                            if 0 <= src < T:
                                acc += kernels[o, i, j] * x[b, i, src]
                    out[b, o, t] = acc
    return out_arr


def conv1d_backward_input(double[:, :, ::1] grad_out, double[:, :, ::1] kernels):
    cdef Py_ssize_t B = grad_out.shape[0], Cout = grad_out.shape[1], T = grad_out.shape[2]
    cdef Py_ssize_t Cin = kernels.shape[1], K = kernels.shape[2]
    cdef Py_ssize_t pad = (K - 1) // 2
    cdef Py_ssize_t b, o, i, t, j, src
    cdef double acc
    gx_arr = np.zeros((B, Cin, T), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    with nogil:
        for b in range(B):
            for i in range(Cin):
                for t in range(T):
                    acc = 0.0
                    for o in range(Cout):
                        for j in range(K):
                            src = t + pad - j
                            if 0 <= src < T:
                                acc += kernels[o, i, j] * grad_out[b, o, src]
                    gx[b, i, t] = acc
    return gx_arr


def conv1d_backward_kernels(double[:, :, ::1] grad_out, double[:, :, ::1] x, Py_ssize_t K):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t Cout = grad_out.shape[1]
    cdef Py_ssize_t pad = (K - 1) // 2
    cdef Py_ssize_t b, o, i, t, j, src
    cdef double acc
    gk_arr = np.zeros((Cout, Cin, K), dtype=np.float64)
    cdef double[:, :, ::1] gk = gk_arr
    with nogil:
        for o in range(Cout):
            for i in range(Cin):
                for j in range(K):
                    acc = 0.0
                    for b in range(B):
                        for t in range(T):
                            src = t + j - pad
                            if 0 <= src < T:
                                acc += grad_out[b, o, t] * x[b, i, src]
                    gk[o, i, j] = acc
    return gk_arr
