# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled selective scan: same contract as ``_scan_py.forward/backward``."""
import numpy as np
cimport cython
from libc.math cimport exp, expf

ctypedef fused real:
    float
    double


cdef inline real _exp(real x) noexcept nogil:
    # single-precision exp for float32 runs; libm exp is several times slower
    if real is float:
        return expf(x)
    else:
        return exp(x)


def forward(real[:, :, ::1] u, real[:, :, ::1] delta, real[:, ::1] A,
            real[:, :, ::1] Bm, real[:, :, ::1] Cm, real[::1] Dskip):
    cdef Py_ssize_t nb = u.shape[0], ns = u.shape[1], nd = u.shape[2], nn = A.shape[1]
    dtype = np.float32 if real is float else np.float64
    y_arr = np.empty((nb, ns, nd), dtype=dtype)
    h_arr = np.empty((nb, ns, nd, nn), dtype=dtype)
    cdef real[:, :, ::1] y = y_arr
    cdef real[:, :, :, ::1] h = h_arr
    cdef Py_ssize_t b, t, d, n
    cdef real dt, du, acc, prev
    with nogil:
        for b in range(nb):
            for t in range(ns):
                for d in range(nd):
                    dt = delta[b, t, d]
                    du = dt * u[b, t, d]
                    acc = 0
                    for n in range(nn):
                        prev = h[b, t - 1, d, n] if t > 0 else 0
                        prev = _exp(dt * A[d, n]) * prev + du * Bm[b, t, n]
                        h[b, t, d, n] = prev
                        acc = acc + Cm[b, t, n] * prev
                    y[b, t, d] = acc + Dskip[d] * u[b, t, d]
    return y_arr, h_arr


def backward(real[:, :, ::1] gy, real[:, :, ::1] u, real[:, :, ::1] delta, real[:, ::1] A,
             real[:, :, ::1] Bm, real[:, :, ::1] Cm, real[::1] Dskip, real[:, :, :, ::1] h):
    cdef Py_ssize_t nb = u.shape[0], ns = u.shape[1], nd = u.shape[2], nn = A.shape[1]
    dtype = np.float32 if real is float else np.float64
    gu_arr = np.empty((nb, ns, nd), dtype=dtype)
    gdelta_arr = np.empty((nb, ns, nd), dtype=dtype)
    gA_arr = np.zeros((nd, nn), dtype=dtype)
    gB_arr = np.zeros((nb, ns, nn), dtype=dtype)
    gC_arr = np.zeros((nb, ns, nn), dtype=dtype)
    gD_arr = np.zeros(nd, dtype=dtype)
    carry_arr = np.zeros((nd, nn), dtype=dtype)
    cdef real[:, :, ::1] gu = gu_arr
    cdef real[:, :, ::1] gdelta = gdelta_arr
    cdef real[:, ::1] gA = gA_arr
    cdef real[:, :, ::1] gB = gB_arr
    cdef real[:, :, ::1] gC = gC_arr
    cdef real[::1] gD = gD_arr
    cdef real[:, ::1] carry = carry_arr
    cdef Py_ssize_t b, t, d, n
    cdef real dt, ut, gyt, da, g, hp, garg, gdel, gsum
    with nogil:
        for b in range(nb):
            for d in range(nd):
                for n in range(nn):
                    carry[d, n] = 0
            for t in range(ns - 1, -1, -1):
                for d in range(nd):
                    dt = delta[b, t, d]
                    ut = u[b, t, d]
                    gyt = gy[b, t, d]
                    gdel = 0
                    gsum = 0
                    for n in range(nn):
                        da = _exp(dt * A[d, n])
                        g = gyt * Cm[b, t, n] + carry[d, n]
                        hp = h[b, t - 1, d, n] if t > 0 else 0
                        garg = g * hp * da
                        gdel = gdel + garg * A[d, n]
                        gA[d, n] += garg * dt
                        gsum = gsum + g * Bm[b, t, n]
                        gB[b, t, n] += g * dt * ut
                        gC[b, t, n] += gyt * h[b, t, d, n]
                        carry[d, n] = g * da
                    gdelta[b, t, d] = gdel + gsum * ut
                    gu[b, t, d] = gsum * dt + Dskip[d] * gyt
                    gD[d] += gyt * ut
    return gu_arr, gdelta_arr, gA_arr, gB_arr, gC_arr, gD_arr
