"""Differentiable primitives over :class:`Array`.

Broadcasting follows numpy's trailing-axis rule; gradients of broadcast
operands are summed back to the operand's shape.
"""
from __future__ import annotations

import builtins

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .array import Array, ShapeError, as_array, make_node

LN_EPS = 1e-5


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_array(a), as_array(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_array(a), as_array(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_array(a), as_array(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data

    def backward(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return make_node(ad * bd, (a, b), backward)


def div(a, b):
    a, b = as_array(a), as_array(b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return make_node(out, (a, b), backward)


def neg(a):
    a = as_array(a)
    return make_node(-a.data, (a,), lambda g: (-g,))


def exp(a):
    a = as_array(a)
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_array(a)
    ad = a.data
    return make_node(np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a):
    a = as_array(a)
    out = np.sqrt(a.data)
    return make_node(out, (a,), lambda g: (g * 0.5 / out,))


def square(a):
    a = as_array(a)
    ad = a.data
    return make_node(ad * ad, (a,), lambda g: (2.0 * g * ad,))


def sigmoid(a):
    a = as_array(a)
    s = expit(a.data)
    return make_node(s, (a,), lambda g: (g * s * (1.0 - s),))


def silu(a):
    a = as_array(a)
    x = a.data
    s = expit(x)
    return make_node(x * s, (a,), lambda g: (g * s * (1.0 + x * (1.0 - s)),))


def softplus(a):
    a = as_array(a)
    x = a.data
    out = np.logaddexp(0.0, x).astype(x.dtype, copy=False)
    return make_node(out, (a,), lambda g: (g * expit(x),))


# ---------------------------------------------------------------- contractions

def matmul(a, b):
    """``a @ b`` with numpy semantics; leading axes broadcast."""
    a, b = as_array(a), as_array(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not contract")
    # strided views (e.g. from reverse) push numpy off the BLAS path
    ad, bd = np.ascontiguousarray(a.data), np.ascontiguousarray(b.data)

    def backward(g):
        g = np.ascontiguousarray(g)
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2:
                # fold all batch axes into one GEMM
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return make_node(ad @ bd, (a, b), backward)


def bmm(a, b):
    a, b = as_array(a), as_array(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"bmm: shapes {a.shape} and {b.shape} are not matching batches")
    return matmul(a, b)


def linear(x, weight, bias=None):
    """``x @ weight + bias`` over the last axis."""
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def conv1d(x, weight, bias=None):
    """Cross-correlation, stride 1, "same" zero padding.

    x: (N, C_in, L); weight: (C_out, C_in, K); bias: (C_out,).
    """
    x, weight = as_array(x), as_array(weight)
    xd, wd = x.data, weight.data
    if xd.ndim != 3 or wd.ndim != 3 or xd.shape[1] != wd.shape[1]:
        raise ShapeError(f"conv1d: input {xd.shape} and weight {wd.shape} do not match")
    n, cin, length = xd.shape
    cout, _, k = wd.shape
    left = (k - 1) // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (left, k - 1 - left)))
    cols = sliding_window_view(xp, k, axis=2)                 # (N, C_in, L, K)
    cols = cols.transpose(0, 2, 1, 3).reshape(n * length, cin * k)
    w2 = wd.reshape(cout, cin * k)
    out = (cols @ w2.T).reshape(n, length, cout).transpose(0, 2, 1)

    def backward(g):
        g2 = g.transpose(0, 2, 1).reshape(n * length, cout)
        gw = (g2.T @ cols).reshape(wd.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ w2).reshape(n, length, cin, k)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for j in range(k):
                gxp[:, :, j:j + length] += gcols[:, :, :, j].transpose(0, 2, 1)
            gx = gxp[:, :, left:left + length]
        return gx, gw

    y = make_node(np.ascontiguousarray(out), (x, weight), backward)
    if bias is not None:
        y = add(y, reshape(bias, (-1, 1)))
    return y


# ---------------------------------------------------------------- normalisers

def softmax(a, axis=-1):
    a = as_array(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_node(s, (a,), backward)


def log_softmax(a, axis=-1):
    a = as_array(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return make_node(out, (a,), lambda g: (g - s * g.sum(axis=axis, keepdims=True),))


def layer_norm(a, weight=None, bias=None, eps=LN_EPS):
    """Normalise over the last axis.

    A zero-variance row maps to zeros before the affine transform.
    """
    a = as_array(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    y = make_node(xhat.astype(x.dtype, copy=False), (a,), backward)
    if weight is not None:
        y = mul(y, weight)
    if bias is not None:
        y = add(y, bias)
    return y


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims=False):
    a = as_array(a)
    shape = a.shape
    axes = _norm_axis(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return make_node(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_array(a)
    axes = _norm_axis(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    return mul(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------- layout

def reshape(a, shape):
    a = as_array(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return make_node(out, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    a = as_array(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return make_node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def swapaxes(a, i, j):
    axes = list(range(as_array(a).ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def concat(arrays, axis=0):
    arrays = [as_array(x) for x in arrays]
    ax = axis % arrays[0].ndim
    for x in arrays[1:]:
        if x.ndim != arrays[0].ndim or any(
                s != t for i, (s, t) in enumerate(zip(x.shape, arrays[0].shape)) if i != ax):
            raise ShapeError(f"concat: shapes {arrays[0].shape} and {x.shape} differ off axis {axis}")
    sizes = [x.shape[ax] for x in arrays]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        idx = [builtins.slice(None)] * g.ndim
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[ax] = builtins.slice(lo, hi)
            parts.append(g[tuple(idx)])
        return tuple(parts)

    return make_node(np.concatenate([x.data for x in arrays], axis=ax), tuple(arrays), backward)


def getitem(a, index):
    """Basic and integer-array indexing; gradient scattered back with add.at."""
    a = as_array(a)
    shape, dtype = a.shape, a.data.dtype
    parts = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def backward(g):
        out = np.zeros(shape, dtype=dtype)
        if fancy:
            np.add.at(out, index, g)
        else:
            out[index] = g
        return (out,)

    return make_node(np.asarray(a.data[index]), (a,), backward)


def slice(a, axis, start, stop):
    idx = [builtins.slice(None)] * as_array(a).ndim
    idx[axis] = builtins.slice(start, stop)
    return getitem(a, tuple(idx))


def reverse(a, axis):
    a = as_array(a)
    return make_node(np.flip(a.data, axis=axis), (a,), lambda g: (np.flip(g, axis=axis),))


def broadcast_to(a, shape):
    a = as_array(a)
    old = a.shape
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast_to: {old} cannot broadcast to {tuple(shape)}") from None
    return make_node(out, (a,), lambda g: (_unbroadcast(g, old),))


# ---------------------------------------------------------------- losses

def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under ``logits`` (B, K)."""
    logits = as_array(logits)
    labels = np.asarray(labels)
    onehot = np.zeros(logits.shape, dtype=logits.data.dtype)
    onehot[np.arange(len(labels)), labels] = 1.0
    return neg(mean(sum(mul(log_softmax(logits), onehot), axis=-1)))
