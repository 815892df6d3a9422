"""Pure-numpy GRU sequence kernel (fallback when the extension is absent).

Gate packing along the 3h axis is [reset, update, candidate]. The candidate
uses the reset gate on the recurrent term:

    r = sigmoid(x Wx_r + h Wh_r + b_r)
    z = sigmoid(x Wx_z + h Wh_z + b_z)
    n = tanh(x Wx_n + b_n + r * (h Wh_n))
    h' = (1 - z) * n + z * h

All math runs in float64 internally; outputs are cast back to the input
dtype so float32 training and float64 gradient checks share one code path.
"""

import numpy as np


def gru_forward(x, h0, wx, wh, b):
    dtype = x.dtype
    x64 = x.astype(np.float64, copy=False)
    wh64 = wh.astype(np.float64, copy=False)
    pre_x = x64 @ wx.astype(np.float64, copy=False) + b.astype(np.float64, copy=False)

    T = x.shape[0]
    h = wh.shape[0]
    hs = np.empty((T, h), dtype=np.float64)
    rs = np.empty((T, h), dtype=np.float64)
    zs = np.empty((T, h), dtype=np.float64)
    ns = np.empty((T, h), dtype=np.float64)
    ms = np.empty((T, h), dtype=np.float64)

    state = h0.astype(np.float64, copy=True)
    for t in range(T):
        ph = state @ wh64
        r = _sigmoid(pre_x[t, :h] + ph[:h])
        z = _sigmoid(pre_x[t, h:2 * h] + ph[h:2 * h])
        m = ph[2 * h:]
        n = np.tanh(pre_x[t, 2 * h:] + r * m)
        state = (1.0 - z) * n + z * state
        rs[t], zs[t], ns[t], ms[t], hs[t] = r, z, n, m, state

    cache = (x64, h0.astype(np.float64, copy=False), wx, wh64, hs, rs, zs, ns, ms, dtype)
    return hs.astype(dtype, copy=False), cache


def gru_backward(g, cache):
    x64, h0, wx, wh64, hs, rs, zs, ns, ms, dtype = cache
    T, h = hs.shape
    g = g.astype(np.float64, copy=False)

    dpre = np.empty((T, 3 * h), dtype=np.float64)
    dwh = np.zeros_like(wh64)
    dh = np.zeros(h, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        h_prev = hs[t - 1] if t > 0 else h0
        r, z, n, m = rs[t], zs[t], ns[t], ms[t]
        dh_t = g[t] + dh
        dz = dh_t * (h_prev - n)
        dn = dh_t * (1.0 - z)
        dh = dh_t * z
        da_n = dn * (1.0 - n * n)
        da_r = (da_n * m) * r * (1.0 - r)
        da_z = dz * z * (1.0 - z)
        dpre[t, :h] = da_r
        dpre[t, h:2 * h] = da_z
        dpre[t, 2 * h:] = da_n
        dph = np.concatenate([da_r, da_z, da_n * r])
        dh += wh64 @ dph
        dwh += np.outer(h_prev, dph)

    dx = dpre @ wx.astype(np.float64, copy=False).T
    dwx = x64.T @ dpre
    db = dpre.sum(axis=0)
    return (dx.astype(dtype, copy=False), dh.astype(dtype, copy=False),
            dwx.astype(dtype, copy=False), dwh.astype(dtype, copy=False),
            db.astype(dtype, copy=False))


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))
