"""Forward/backward kernels for every layer type, channels-last with a leading batch axis.

Shapes: 2D activations are ``(N, H, W, C)``, 3D activations ``(N, H, W, D, C)``.
Convolution weights are ``(*kernel, C_in, F)``. Convolution is cross-correlation
(no kernel flip). Each ``*_forward`` returns ``(out, cache)``; the matching
``*_backward`` consumes the cache.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError

BCE_EPS = 1e-7


def preserve_pads(kernel):
    """Zero padding (before, after) per axis so a stride-1 conv keeps the extent."""
    return [((k - 1) // 2, k - 1 - (k - 1) // 2) for k in kernel]


def conv_forward(x, w, b, padding="none"):
    nsp = w.ndim - 2
    kernel = w.shape[:nsp]
    cin, filters = w.shape[nsp], w.shape[nsp + 1]
    if x.ndim != nsp + 2 or x.shape[-1] != cin:
        raise ShapeError(f"conv input {x.shape} incompatible with weights {w.shape}")
    if padding == "preserve":
        pads = preserve_pads(kernel)
        x = np.pad(x, [(0, 0), *pads, (0, 0)])
    elif padding == "none":
        pads = [(0, 0)] * nsp
    else:
        raise ValueError(f"unknown padding {padding!r}")
    spatial = x.shape[1:1 + nsp]
    if any(k > s for k, s in zip(kernel, spatial)):
        raise ShapeError(f"kernel {kernel} larger than padded input {spatial}")
    out_sp = tuple(s - k + 1 for s, k in zip(spatial, kernel))

    view = sliding_window_view(x, kernel, axis=tuple(range(1, 1 + nsp)))
    # view: (N, *out, C, *K) -> cols: (N, *out, *K, C)
    perm = (0, *range(1, 1 + nsp), *range(2 + nsp, 2 + 2 * nsp), 1 + nsp)
    cols = view.transpose(perm).reshape(-1, math.prod(kernel) * cin)
    out = cols @ w.reshape(-1, filters)
    out += b
    out = out.reshape(x.shape[0], *out_sp, filters)
    return out, (cols, x.shape, pads, w)


def conv_backward(dout, cache):
    cols, xp_shape, pads, w = cache
    nsp = w.ndim - 2
    kernel = w.shape[:nsp]
    cin, filters = w.shape[nsp], w.shape[nsp + 1]
    out_sp = dout.shape[1:1 + nsp]

    d2 = dout.reshape(-1, filters)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(-1, filters).T).reshape(dout.shape[0], *out_sp, *kernel, cin)

    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    lead = (slice(None),) * (1 + nsp)
    for offs in np.ndindex(*kernel):
        dst = (slice(None),) + tuple(slice(o, o + n) for o, n in zip(offs, out_sp))
        dxp[dst] += dcols[lead + offs]
    crop = (slice(None),) + tuple(slice(lo, s - hi) for (lo, hi), s in zip(pads, xp_shape[1:])) \
        + (slice(None),)
    return dxp[crop], dw, db


def transpose_conv_forward(x, w, b, stride):
    """Strided transpose convolution with the size-multiplying convention.

    Input pixel ``i`` scatters ``kernel`` weighted copies to output positions
    ``stride*i + k``; overlaps sum; the result is cropped to ``stride * in``.
    """
    nsp = w.ndim - 2
    kernel = w.shape[:nsp]
    cin, filters = w.shape[nsp], w.shape[nsp + 1]
    if x.ndim != nsp + 2 or x.shape[-1] != cin:
        raise ShapeError(f"transpose conv input {x.shape} incompatible with weights {w.shape}")
    n = x.shape[0]
    in_sp = x.shape[1:1 + nsp]
    wmat = w.reshape(-1, cin, filters).transpose(1, 0, 2).reshape(cin, -1)
    contrib = (x.reshape(-1, cin) @ wmat).reshape(n, *in_sp, *kernel, filters)

    full = tuple(max((s - 1) * st + k, st * s) for s, st, k in zip(in_sp, stride, kernel))
    y = np.zeros((n, *full, filters), dtype=contrib.dtype)
    lead = (slice(None),) * (1 + nsp)
    for offs in np.ndindex(*kernel):
        dst = (slice(None),) + tuple(
            slice(o, o + st * (s - 1) + 1, st) for o, st, s in zip(offs, stride, in_sp))
        y[dst] += contrib[lead + offs]
    out_sp = tuple(st * s for st, s in zip(stride, in_sp))
    y = y[(slice(None),) + tuple(slice(0, e) for e in out_sp)] + b
    return y, (x, wmat, w.shape, full, stride)


def transpose_conv_backward(dout, cache):
    x, wmat, wshape, full, stride = cache
    nsp = len(wshape) - 2
    kernel = wshape[:nsp]
    cin, filters = wshape[nsp], wshape[nsp + 1]
    n = x.shape[0]
    in_sp = x.shape[1:1 + nsp]

    db = dout.reshape(-1, filters).sum(axis=0)
    dfull = np.zeros((n, *full, filters), dtype=dout.dtype)
    dfull[(slice(None),) + tuple(slice(0, e) for e in dout.shape[1:1 + nsp])] = dout
    dcontrib = np.empty((n, *in_sp, *kernel, filters), dtype=dout.dtype)
    lead = (slice(None),) * (1 + nsp)
    for offs in np.ndindex(*kernel):
        src = (slice(None),) + tuple(
            slice(o, o + st * (s - 1) + 1, st) for o, st, s in zip(offs, stride, in_sp))
        dcontrib[lead + offs] = dfull[src]
    dc2 = dcontrib.reshape(-1, math.prod(kernel) * filters)
    x2 = x.reshape(-1, cin)
    dwmat = x2.T @ dc2
    dw = dwmat.reshape(cin, -1, filters).transpose(1, 0, 2).reshape(wshape)
    dx = (dc2 @ wmat.T).reshape(x.shape)
    return dx, dw, db


def _pool_geometry(in_sp, pool, mode):
    if mode == "floor":
        if any(p > s for p, s in zip(pool, in_sp)):
            raise ShapeError(f"pool {tuple(pool)} larger than input {in_sp} in floor mode")
        return tuple(s // p for s, p in zip(in_sp, pool))
    if mode == "ceil":
        return tuple(-(-s // p) for s, p in zip(in_sp, pool))
    raise ValueError(f"unknown pooling mode {mode!r}")


def _pool_slices(offs, pool, out_sp):
    return (slice(None),) + tuple(slice(o, o + p * n, p) for o, p, n in zip(offs, pool, out_sp))


def maxpool_forward(x, pool, mode="floor"):
    """Non-overlapping max pooling (stride = pool extent).

    ``floor`` drops the remainder; ``ceil`` zero-pads up to whole windows.
    """
    nsp = len(pool)
    in_sp = x.shape[1:1 + nsp]
    out_sp = _pool_geometry(in_sp, pool, mode)
    if mode == "ceil":
        xs = np.pad(x, [(0, 0), *[(0, o * p - s) for o, p, s in zip(out_sp, pool, in_sp)], (0, 0)])
    else:
        xs = x
    offsets = list(np.ndindex(*pool))
    out = xs[_pool_slices(offsets[0], pool, out_sp)].copy()
    for offs in offsets[1:]:
        np.maximum(out, xs[_pool_slices(offs, pool, out_sp)], out=out)
    return out, (xs, out, x.shape, tuple(pool))


def maxpool_backward(dout, cache):
    """Routes each gradient to the first maximal element of its window (row-major order)."""
    xs, out, x_shape, pool = cache
    nsp = len(pool)
    out_sp = out.shape[1:1 + nsp]
    dxs = np.zeros(xs.shape, dtype=dout.dtype)
    taken = np.zeros(out.shape, dtype=bool)
    for offs in np.ndindex(*pool):
        sl = _pool_slices(offs, pool, out_sp)
        hit = (xs[sl] == out) & ~taken
        dxs[sl] = dout * hit
        taken |= hit
    dx = np.zeros(x_shape, dtype=dout.dtype)
    common = (slice(None),) + tuple(slice(0, min(a, b)) for a, b in
                                    zip(x_shape[1:1 + nsp], xs.shape[1:1 + nsp]))
    dx[common] = dxs[common]
    return dx


def dense_forward(x, w, b):
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense input {x.shape} incompatible with weights {w.shape}")
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def relu(z):
    return np.maximum(z, 0)


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation_forward(z, kind):
    if kind == "relu":
        return relu(z)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "none":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(dout, out, kind):
    if kind == "relu":
        return dout * (out > 0)
    if kind == "sigmoid":
        return dout * out * (1 - out)
    return dout


def mse(target, pred):
    """Mean squared error over every element; returns (loss, dloss/dpred)."""
    if target.shape != pred.shape:
        raise ShapeError(f"mse shape mismatch {target.shape} vs {pred.shape}")
    diff = pred - target
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    return loss, (2.0 / diff.size) * diff


def bce(target, prob, eps=BCE_EPS):
    """Mean binary cross-entropy with the probability clamped to [eps, 1-eps].

    The gradient is evaluated at the clamped probability.
    """
    target = np.asarray(target)
    prob = np.asarray(prob)
    if target.shape != prob.shape:
        raise ShapeError(f"bce shape mismatch {target.shape} vs {prob.shape}")
    p = np.clip(prob, eps, 1 - eps)
    p64 = p.astype(np.float64)
    loss = -np.mean(target * np.log(p64) + (1 - target) * np.log1p(-p64))
    grad = (p - target) / (p * (1 - p)) / target.size
    return float(loss), grad.astype(prob.dtype)
