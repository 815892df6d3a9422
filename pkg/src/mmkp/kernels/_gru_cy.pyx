# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled GRU sequence kernel.

Same contract and gate packing as gru_py (see that module for the equations).
The per-timestep recurrence runs as C loops over float64 buffers; the big
input projection x @ Wx still goes through BLAS via numpy before the loop.
"""

import numpy as np

cimport cython
from libc.math cimport exp, tanh


cdef inline double _sig(double v) nogil:
    return 1.0 / (1.0 + exp(-v))


def gru_forward(x, h0, wx, wh, b):
    dtype = x.dtype
    cdef double[:, ::1] x64 = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] wh64 = np.ascontiguousarray(wh, dtype=np.float64)
    pre_np = np.asarray(x64) @ np.ascontiguousarray(wx, dtype=np.float64) \
        + np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] pre = pre_np

    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t h = wh.shape[0]
    hs_np = np.empty((T, h), dtype=np.float64)
    rs_np = np.empty((T, h), dtype=np.float64)
    zs_np = np.empty((T, h), dtype=np.float64)
    ns_np = np.empty((T, h), dtype=np.float64)
    ms_np = np.empty((T, h), dtype=np.float64)
    cdef double[:, ::1] hs = hs_np
    cdef double[:, ::1] rs = rs_np
    cdef double[:, ::1] zs = zs_np
    cdef double[:, ::1] ns = ns_np
    cdef double[:, ::1] ms = ms_np

    state_np = np.ascontiguousarray(h0, dtype=np.float64).copy()
    cdef double[::1] state = state_np
    ph_np = np.empty(3 * h, dtype=np.float64)
    cdef double[::1] ph = ph_np

    cdef Py_ssize_t t, i, j
    cdef double acc, r, z, n, m
    with nogil:
        for t in range(T):
            for j in range(3 * h):
                acc = 0.0
                for i in range(h):
                    acc += state[i] * wh64[i, j]
                ph[j] = acc
            for i in range(h):
                r = _sig(pre[t, i] + ph[i])
                z = _sig(pre[t, h + i] + ph[h + i])
                m = ph[2 * h + i]
                n = tanh(pre[t, 2 * h + i] + r * m)
                rs[t, i] = r
                zs[t, i] = z
                ns[t, i] = n
                ms[t, i] = m
                state[i] = (1.0 - z) * n + z * state[i]
                hs[t, i] = state[i]

    cache = (np.asarray(x64), np.ascontiguousarray(h0, dtype=np.float64), wx,
             np.asarray(wh64), hs_np, rs_np, zs_np, ns_np, ms_np, dtype)
    return hs_np.astype(dtype, copy=False), cache


def gru_backward(g, cache):
    x64, h0_np, wx, wh_np, hs_np, rs_np, zs_np, ns_np, ms_np, dtype = cache
    cdef double[:, ::1] g64 = np.ascontiguousarray(g, dtype=np.float64)
    cdef double[:, ::1] hs = hs_np
    cdef double[:, ::1] rs = rs_np
    cdef double[:, ::1] zs = zs_np
    cdef double[:, ::1] ns = ns_np
    cdef double[:, ::1] ms = ms_np
    cdef double[:, ::1] wh = wh_np
    cdef double[::1] h0 = h0_np

    cdef Py_ssize_t T = hs_np.shape[0]
    cdef Py_ssize_t h = hs_np.shape[1]
    dpre_np = np.empty((T, 3 * h), dtype=np.float64)
    dwh_np = np.zeros_like(wh_np)
    cdef double[:, ::1] dpre = dpre_np
    cdef double[:, ::1] dwh = dwh_np
    dh_np = np.zeros(h, dtype=np.float64)
    cdef double[::1] dh = dh_np
    dph_np = np.empty(3 * h, dtype=np.float64)
    cdef double[::1] dph = dph_np

    cdef Py_ssize_t t, i, j
    cdef double r, z, n, m, hp, dh_t, dz, dn, da_n
    with nogil:
        for t in range(T - 1, -1, -1):
            for i in range(h):
                hp = hs[t - 1, i] if t > 0 else h0[i]
                r = rs[t, i]
                z = zs[t, i]
                n = ns[t, i]
                m = ms[t, i]
                dh_t = g64[t, i] + dh[i]
                dz = dh_t * (hp - n)
                dn = dh_t * (1.0 - z)
                dh[i] = dh_t * z
                da_n = dn * (1.0 - n * n)
                dpre[t, i] = (da_n * m) * r * (1.0 - r)
                dpre[t, h + i] = dz * z * (1.0 - z)
                dpre[t, 2 * h + i] = da_n
                dph[i] = dpre[t, i]
                dph[h + i] = dpre[t, h + i]
                dph[2 * h + i] = da_n * r
            for i in range(h):
                hp = hs[t - 1, i] if t > 0 else h0[i]
                for j in range(3 * h):
                    dh[i] += wh[i, j] * dph[j]
                    dwh[i, j] += hp * dph[j]

    wx64 = np.ascontiguousarray(wx, dtype=np.float64)
    dx = dpre_np @ wx64.T
    dwx = x64.T @ dpre_np
    db = dpre_np.sum(axis=0)
    return (dx.astype(dtype, copy=False), dh_np.astype(dtype, copy=False),
            dwx.astype(dtype, copy=False), dwh_np.astype(dtype, copy=False),
            db.astype(dtype, copy=False))
