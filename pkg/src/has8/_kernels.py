"""Fused inner loops for the hot memory-bound ops, with numpy fallbacks.

The numba kernels compute exactly the same recurrences as the numpy code
paths next to them; they only fuse passes to cut memory traffic.  All
constants are cast to the array dtype before entering a kernel so f32
arithmetic stays f32.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is available in normal installs
    HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(f):
            return f

        return wrap


@njit(cache=True)
def _if_forward_jit(c2, vth, one, membranes2, spikes2):
    # time-major walk: per-element state lives in u/s rows for cache locality
    steps, m = c2.shape
    zero = one - one
    u = np.zeros(m, dtype=c2.dtype)
    s = np.zeros(m, dtype=c2.dtype)
    for t in range(steps):
        row = c2[t]
        mrow = membranes2[t]
        srow = spikes2[t]
        for j in range(m):
            uj = (one - s[j]) * u[j] + row[j]
            sj = one if uj >= vth else zero
            u[j] = uj
            s[j] = sj
            mrow[j] = uj
            srow[j] = sj


@njit(cache=True)
def _if_backward_jit(g2, membranes2, spikes2, vth, half_pi_alpha, half_alpha, one, dc2):
    steps, m = g2.shape
    du = np.zeros(m, dtype=g2.dtype)
    for t in range(steps - 1, -1, -1):
        grow = g2[t]
        mrow = membranes2[t]
        srow = spikes2[t]
        drow = dc2[t]
        if t == steps - 1:
            for j in range(m):
                z = half_pi_alpha * (mrow[j] - vth)
                du[j] = grow[j] * (half_alpha / (one + z * z))
                drow[j] = du[j]
        else:
            for j in range(m):
                mem = mrow[j]
                ds = grow[j] - du[j] * mem
                z = half_pi_alpha * (mem - vth)
                surr = half_alpha / (one + z * z)
                duj = ds * surr + du[j] * (one - srow[j])
                du[j] = duj
                drow[j] = duj


def if_forward(c: np.ndarray, vth: float):
    """Run the hard-reset IF recurrence over [T, ...]; returns (membranes, spikes)."""
    membranes = np.empty_like(c)
    spikes = np.empty_like(c)
    if HAVE_NUMBA:
        flat = c.reshape(c.shape[0], -1)
        dt = c.dtype.type
        _if_forward_jit(flat, dt(vth), dt(1.0), membranes.reshape(flat.shape), spikes.reshape(flat.shape))
        return membranes, spikes
    u = np.zeros_like(c[0])
    s = np.zeros_like(c[0])
    for t in range(c.shape[0]):
        u = (1.0 - s) * u + c[t]
        s = (u >= vth).astype(c.dtype)
        membranes[t] = u
        spikes[t] = s
    return membranes, spikes


def if_backward(g: np.ndarray, membranes: np.ndarray, spikes: np.ndarray, vth: float, alpha: float):
    """Adjoint sweep of the IF recurrence; returns dL/d(current)."""
    dc = np.empty_like(g)
    if HAVE_NUMBA:
        flat = g.reshape(g.shape[0], -1)
        dt = g.dtype.type
        _if_backward_jit(
            flat,
            membranes.reshape(flat.shape),
            spikes.reshape(flat.shape),
            dt(vth),
            dt(np.pi / 2.0 * alpha),
            dt(alpha / 2.0),
            dt(1.0),
            dc.reshape(flat.shape),
        )
        return dc
    du = None
    for t in range(g.shape[0] - 1, -1, -1):
        surr = (alpha / (2.0 * (1.0 + (np.pi / 2.0 * alpha * (membranes[t] - vth)) ** 2))).astype(g.dtype)
        if du is None:
            du = g[t] * surr
        else:
            ds = g[t] - du * membranes[t]
            du = ds * surr + du * (1.0 - spikes[t])
        dc[t] = du
    return dc


@njit(cache=True)
def _bn_scale_shift_jit(x3, mean, inv, gamma, beta, xhat3, out3):
    n, c, l = x3.shape
    for i in range(n):
        for ch in range(c):
            mu = mean[ch]
            iv = inv[ch]
            ga = gamma[ch]
            be = beta[ch]
            for j in range(l):
                xh = (x3[i, ch, j] - mu) * iv
                xhat3[i, ch, j] = xh
                out3[i, ch, j] = ga * xh + be


@njit(cache=True)
def _bn_backward_dx_jit(g3, xhat3, coeff, dbeta_n, dgamma_n, dx3):
    n, c, l = g3.shape
    for i in range(n):
        for ch in range(c):
            co = coeff[ch]
            a = dbeta_n[ch]
            b = dgamma_n[ch]
            for j in range(l):
                dx3[i, ch, j] = co * (g3[i, ch, j] - a - xhat3[i, ch, j] * b)


def bn_scale_shift(x: np.ndarray, mean, inv, gamma, beta, cshape):
    """Normalize and apply the affine transform; returns (xhat, out)."""
    if HAVE_NUMBA and x.flags.c_contiguous:
        x3 = x.reshape(x.shape[0], x.shape[1], -1)
        xhat = np.empty_like(x)
        out = np.empty_like(x)
        dt = x.dtype
        _bn_scale_shift_jit(
            x3,
            mean.astype(dt),
            inv.astype(dt),
            gamma.astype(dt),
            beta.astype(dt),
            xhat.reshape(x3.shape),
            out.reshape(x3.shape),
        )
        return xhat, out
    xhat = (x - mean.reshape(cshape)) * inv.reshape(cshape)
    out = gamma.reshape(cshape) * xhat + beta.reshape(cshape)
    return xhat, out


def bn_backward_dx(g: np.ndarray, xhat: np.ndarray, coeff, dbeta_n, dgamma_n, cshape):
    """Train-mode input gradient: coeff * (g - dbeta/n - xhat * dgamma/n)."""
    if HAVE_NUMBA and g.flags.c_contiguous and xhat.flags.c_contiguous:
        g3 = g.reshape(g.shape[0], g.shape[1], -1)
        dx = np.empty_like(g)
        dt = g.dtype
        _bn_backward_dx_jit(
            g3,
            xhat.reshape(g3.shape),
            coeff.astype(dt),
            dbeta_n.astype(dt),
            dgamma_n.astype(dt),
            dx.reshape(g3.shape),
        )
        return dx
    return coeff.reshape(cshape) * (g - dbeta_n.reshape(cshape) - xhat * dgamma_n.reshape(cshape))


@njit(cache=True)
def _maxpool_forward_jit(x4, k, out4, idx4):
    b, c, ho, wo = out4.shape
    for i in range(b):
        for ch in range(c):
            for oh in range(ho):
                for ow in range(wo):
                    best = x4[i, ch, oh * k, ow * k]
                    arg = 0
                    for di in range(k):
                        for dj in range(k):
                            v = x4[i, ch, oh * k + di, ow * k + dj]
                            if v > best:
                                best = v
                                arg = di * k + dj
                    out4[i, ch, oh, ow] = best
                    idx4[i, ch, oh, ow] = arg


@njit(cache=True)
def _maxpool_backward_jit(g4, idx4, k, dx4):
    b, c, ho, wo = g4.shape
    for i in range(b):
        for ch in range(c):
            for oh in range(ho):
                for ow in range(wo):
                    arg = idx4[i, ch, oh, ow]
                    dx4[i, ch, oh * k + arg // k, ow * k + arg % k] = g4[i, ch, oh, ow]


def maxpool_forward(x: np.ndarray, k: int):
    """k x k / stride-k max pooling; returns (out, argmax indices) or (out, None)."""
    b, c, h, w = x.shape
    ho, wo = h // k, w // k
    if HAVE_NUMBA and x.flags.c_contiguous:
        out = np.empty((b, c, ho, wo), dtype=x.dtype)
        idx = np.empty((b, c, ho, wo), dtype=np.int8)
        _maxpool_forward_jit(x, k, out, idx)
        return out, idx
    xr = x.reshape(b, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, k * k)
    idx = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return out, idx.astype(np.int8)


def maxpool_backward(g: np.ndarray, idx: np.ndarray, k: int, x_shape):
    dx = np.zeros(x_shape, dtype=g.dtype)
    if HAVE_NUMBA and g.flags.c_contiguous:
        _maxpool_backward_jit(g, idx, k, dx)
        return dx
    b, c, h, w = x_shape
    ho, wo = h // k, w // k
    dxr = np.zeros((b, c, ho, wo, k * k), dtype=g.dtype)
    np.put_along_axis(dxr, idx.astype(np.int64)[..., None], g[..., None], axis=-1)
    return dxr.reshape(b, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)
