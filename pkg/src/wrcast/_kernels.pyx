# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: dilated causal convolution and the exact greedy
split scan. Same API and arithmetic as wrcast._kernels_numpy."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def conv1d_causal_forward(double[:, :, ::1] x, double[:, :, ::1] w,
                          double[::1] b, int dilation):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], Cin = x.shape[2]
    cdef Py_ssize_t K = w.shape[0], Cout = w.shape[2]
    cdef cnp.ndarray[double, ndim=3] out = np.empty((B, T, Cout))
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t bi, t, k, ci, co, pos
    cdef double acc
    for bi in range(B):
        for t in range(T):
            for co in range(Cout):
                y[bi, t, co] = b[co]
            for k in range(K):
                pos = t - k * dilation
                if pos < 0:
                    continue
                for ci in range(Cin):
                    acc = x[bi, pos, ci]
                    for co in range(Cout):
                        y[bi, t, co] += acc * w[k, ci, co]
    return out


def conv1d_causal_backward(double[:, :, ::1] x, double[:, :, ::1] w,
                           double[:, :, ::1] gy, int dilation):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], Cin = x.shape[2]
    cdef Py_ssize_t K = w.shape[0], Cout = w.shape[2]
    cdef cnp.ndarray[double, ndim=3] gx_arr = np.zeros((B, T, Cin))
    cdef cnp.ndarray[double, ndim=3] gw_arr = np.zeros((K, Cin, Cout))
    cdef cnp.ndarray[double, ndim=1] gb_arr = np.zeros(Cout)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t bi, t, k, ci, co, pos
    cdef double g
    for bi in range(B):
        for t in range(T):
            for co in range(Cout):
                gb[co] += gy[bi, t, co]
            for k in range(K):
                pos = t - k * dilation
                if pos < 0:
                    continue
                for ci in range(Cin):
                    g = 0.0
                    for co in range(Cout):
                        g += gy[bi, t, co] * w[k, ci, co]
                        gw[k, ci, co] += x[bi, pos, ci] * gy[bi, t, co]
                    gx[bi, pos, ci] += g
    return gx_arr, gw_arr, gb_arr


def best_split(double[::1] values, double[::1] grad, double[::1] hess,
               int min_leaf):
    cdef Py_ssize_t n = values.shape[0]
    if n < 2 * min_leaf:
        return -1.0, 0.0, 0
    cdef double gt = 0.0, ht = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        gt += grad[i]
        ht += hess[i]
    if ht <= 0.0:
        return -1.0, 0.0, 0
    cdef double parent = gt * gt / ht
    cdef double gl = 0.0, hl = 0.0, gr, hr, gain
    cdef double best_gain = -1.0, best_thr = 0.0
    cdef Py_ssize_t best_left = 0, cnt
    for i in range(n - 1):
        gl += grad[i]
        hl += hess[i]
        cnt = i + 1
        if values[i + 1] == values[i]:
            continue
        if cnt < min_leaf or n - cnt < min_leaf:
            continue
        gr = gt - gl
        hr = ht - hl
        if hl <= 0.0 or hr <= 0.0:
            continue
        gain = gl * gl / hl + gr * gr / hr - parent
        if gain > best_gain:
            best_gain = gain
            best_thr = (values[i] + values[i + 1]) / 2.0
            best_left = cnt
    if best_gain <= 0.0:
        return -1.0, 0.0, 0
    return best_gain, best_thr, best_left
