"""Differentiable ops used by the U-Net and Wave-U-Net models."""

from __future__ import annotations

import math

import numpy as np

from ..errors import InvalidArgument, ShapeError, StatError
from .tensor import Tensor


def _t(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a = _t(a)
    b = _t(b, a)
    return Tensor.from_op(a.data + b.data, (a, b),
                          lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a = _t(a)
    b = _t(b, a)
    return Tensor.from_op(a.data - b.data, (a, b),
                          lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b):
    a = _t(a)
    b = _t(b, a)
    return Tensor.from_op(a.data * b.data, (a, b),
                          lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def abs(x):  # noqa: A001 - mirrors numpy naming
    # sign(0) = 0 gives the zero subgradient at the kink
    return Tensor.from_op(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def sum(x):  # noqa: A001
    return Tensor.from_op(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x):
    n = x.size
    return Tensor.from_op(np.mean(x.data), (x,), lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def reshape(x, shape):
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def relu(x):
    pos = x.data > 0
    return Tensor.from_op(np.where(pos, x.data, 0.0).astype(x.dtype), (x,), lambda g: (g * pos,))


def leaky_relu(x, alpha=0.2):
    pos = x.data > 0
    slope = np.where(pos, 1.0, alpha).astype(x.dtype)
    return Tensor.from_op(x.data * slope, (x,), lambda g: (g * slope,))


def sigmoid(x):
    y = np.empty_like(x.data)
    pos = x.data >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    y[~pos] = ex / (1.0 + ex)
    return Tensor.from_op(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x):
    y = np.tanh(x.data)
    return Tensor.from_op(y, (x,), lambda g: (g * (1.0 - y * y),))


def dropout(x, p=0.5, training=True, seed=None):
    """Inverted dropout; the mask depends only on ``seed``."""
    if not 0.0 <= p < 1.0:
        raise InvalidArgument(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    rng = np.random.default_rng(seed)
    scale = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return Tensor.from_op(x.data * scale, (x,), lambda g: (g * scale,))


# ---------------------------------------------------------------- convolution core

def same_padding(in_size, k, stride):
    out = -(-in_size // stride)
    total = max(stride * (out - 1) + k - in_size, 0)
    return total // 2, total - total // 2, out


def _pads(spatial, kernel, stride, padding):
    pads, outs = [], []
    for n, k in zip(spatial, kernel):
        if padding == "same":
            lo, hi, out = same_padding(n, k, stride)
        elif padding == "valid":
            if n < k:
                raise ShapeError(f"input length {n} shorter than filter {k}")
            lo, hi, out = 0, 0, (n - k) // stride + 1
        else:
            raise InvalidArgument(f"unknown padding '{padding}'")
        pads.append((lo, hi))
        outs.append(out)
    return pads, outs


def _im2col(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    view = view[:, :, ::stride, ::stride][:, :, :ho, :wo]
    return view.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def _col2im(cols, padded_shape, kh, kw, stride, ho, wo):
    n, c = padded_shape[:2]
    cols = cols.reshape(n, ho, wo, c, kh, kw)
    out = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[..., i, j].transpose(0, 3, 1, 2)
    return out


def _crop_pad(xp, pads):
    (t, b), (l, r) = pads
    return xp[:, :, t:xp.shape[2] - b, l:xp.shape[3] - r]


def _conv2d_arrays(x, w, stride, pads, outs):
    kh, kw = w.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0)) + tuple(pads))
    cols = _im2col(xp, kh, kw, stride, *outs)
    wmat = w.reshape(w.shape[0], -1)
    y = (cols @ wmat.T).reshape(x.shape[0], outs[0], outs[1], w.shape[0]).transpose(0, 3, 1, 2)
    return y, xp.shape, cols


def _conv2d(x, w, b, stride, padding):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    kh, kw = w.shape[2:]
    pads, outs = _pads(x.shape[2:], (kh, kw), stride, padding)
    y, pshape, cols = _conv2d_arrays(x.data, w.data, stride, pads, outs)
    if b is not None:
        y = y + b.data.reshape(1, -1, 1, 1)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, w.shape[0])
        gw = (g2.T @ cols).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = g2 @ w.data.reshape(w.shape[0], -1)
            gx = _crop_pad(_col2im(dcols, pshape, kh, kw, stride, *outs), pads)
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    parents = (x, w) + ((b,) if b is not None else ())
    return Tensor.from_op(y, parents, backward)


def _conv_transpose2d(x, w, b, stride, output_shape):
    """Adjoint of a same-padded conv2d whose input had ``output_shape``."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv_transpose2d expects 4-d input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {w.shape[0]}")
    kh, kw = w.shape[2:]
    out_hw = tuple(int(v) for v in output_shape[-2:])
    pads, outs = _pads(out_hw, (kh, kw), stride, "same")
    if tuple(outs) != tuple(x.shape[2:]):
        raise ShapeError(f"output shape {out_hw} inconsistent with input {x.shape[2:]} at stride {stride}")
    n, fi = x.shape[:2]
    co = w.shape[1]
    pshape = (n, co, out_hw[0] + pads[0][0] + pads[0][1], out_hw[1] + pads[1][0] + pads[1][1])
    x2 = x.data.transpose(0, 2, 3, 1).reshape(-1, fi)
    wmat = w.data.reshape(fi, -1)
    y = _crop_pad(_col2im(x2 @ wmat, pshape, kh, kw, stride, *outs), pads)
    if b is not None:
        y = y + b.data.reshape(1, -1, 1, 1)

    def backward(g):
        gp = np.pad(g, ((0, 0), (0, 0)) + tuple(pads))
        cols = _im2col(gp, kh, kw, stride, *outs)
        gx = (cols @ wmat.T).reshape(n, outs[0], outs[1], fi).transpose(0, 3, 1, 2) if x.requires_grad else None
        gw = (x2.T @ cols).reshape(w.shape) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    parents = (x, w) + ((b,) if b is not None else ())
    return Tensor.from_op(np.ascontiguousarray(y), parents, backward)


def conv2d(x, kernel, bias=None, stride=1, padding="same"):
    """2-d cross-correlation. x [N,C,H,W], kernel [F,C,kh,kw]."""
    return _conv2d(x, kernel, bias, stride, padding)


def conv_transpose2d(x, kernel, bias=None, stride=2, output_shape=None):
    """Transposed conv. x [N,Fi,h,w], kernel [Fi,Co,kh,kw] -> [N,Co,*output_shape]."""
    if output_shape is None:
        output_shape = (x.shape[2] * stride, x.shape[3] * stride)
    return _conv_transpose2d(x, kernel, bias, stride, output_shape)


def _to2d(x):
    return reshape(x, (x.shape[0], x.shape[1], 1, x.shape[2]))


def _from2d(y):
    return reshape(y, (y.shape[0], y.shape[1], y.shape[3]))


def conv1d(x, kernel, bias=None, stride=1, padding="valid"):
    """1-d cross-correlation. x [N,C,L], kernel [F,C,k]."""
    if x.ndim != 3 or kernel.ndim != 3:
        raise ShapeError(f"conv1d expects 3-d input and kernel, got {x.shape} and {kernel.shape}")
    return _from2d(_conv2d(_to2d(x), _to2d(kernel), bias, stride, padding))


def conv_transpose1d(x, kernel, bias=None, stride=2, output_len=None):
    if output_len is None:
        output_len = x.shape[2] * stride
    return _from2d(_conv_transpose2d(_to2d(x), _to2d(kernel), bias, stride, (1, output_len)))


# ---------------------------------------------------------------- normalisation

def batch_norm(x, gamma, beta, running_mean, running_var, training=True, momentum=0.9, eps=1e-5):
    """Per-channel batch norm over every axis except 1.

    ``running_mean``/``running_var`` are numpy arrays updated in place in
    training mode: ``running = momentum * running + (1 - momentum) * batch``.
    """
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = [1] * x.ndim
    bshape[1] = -1
    m = x.size // x.shape[1]
    gam = gamma.data.reshape(bshape)
    if training:
        if m < 2:
            raise StatError("batch norm needs more than one value per channel in training mode")
        mu = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu.reshape(-1)
        running_var *= momentum
        running_var += (1 - momentum) * var.reshape(-1)
    else:
        mu = running_mean.reshape(bshape)
        var = running_var.reshape(bshape)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = gam * xhat + beta.data.reshape(bshape)

    def backward(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        dxhat = g * gam
        if training:
            gx = inv / m * (m * dxhat - dxhat.sum(axis=axes, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            gx = dxhat * inv
        return gx, gg, gb

    return Tensor.from_op(y.astype(x.dtype), (x, gamma, beta), backward)


# ---------------------------------------------------------------- resampling / skip helpers

def decimate2(x):
    """Keep even time indices: [N,C,L] -> [N,C,ceil(L/2)]."""
    n = x.shape[-1]

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[..., ::2] = g
        return (gx,)

    return Tensor.from_op(np.ascontiguousarray(x.data[..., ::2]), (x,), backward)


def linear_upsample2(x):
    """Insert midpoints: [N,C,L] -> [N,C,2L-1]."""
    d = x.data
    n = d.shape[-1]
    y = np.empty(d.shape[:-1] + (2 * n - 1,), dtype=d.dtype)
    y[..., ::2] = d
    y[..., 1::2] = 0.5 * (d[..., :-1] + d[..., 1:])

    def backward(g):
        gx = g[..., ::2].copy()
        mid = 0.5 * g[..., 1::2]
        gx[..., :-1] += mid
        gx[..., 1:] += mid
        return (gx,)

    return Tensor.from_op(y, (x,), backward)


def crop(x, spatial):
    """Center-crop the spatial axes of ``x`` to ``spatial``."""
    spatial = tuple(spatial)
    have = x.shape[2:]
    if len(spatial) != len(have) or any(s > h for s, h in zip(spatial, have)):
        raise ShapeError(f"cannot crop {have} to {spatial}")
    if spatial == have:
        return x
    idx = (slice(None), slice(None)) + tuple(slice((h - s) // 2, (h - s) // 2 + s) for h, s in zip(have, spatial))

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[idx] = g
        return (gx,)

    return Tensor.from_op(np.ascontiguousarray(x.data[idx]), (x,), backward)


def concat(tensors, axis=1):
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        sl = [slice(None)] * g.ndim
        out = []
        for i in range(len(tensors)):
            sl[axis] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(sl)])
        return tuple(out)

    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    return Tensor.from_op(data, tensors, backward)


def crop_concat(skip, upsampled):
    """Center-crop ``skip`` to ``upsampled`` and stack them on the channel axis."""
    if skip.shape[0] != upsampled.shape[0] or skip.ndim != upsampled.ndim:
        raise ShapeError(f"incompatible skip {skip.shape} and upsampled {upsampled.shape}")
    return concat([crop(skip, upsampled.shape[2:]), upsampled], axis=1)


# ---------------------------------------------------------------- losses

def l1_loss(pred, target):
    """Mean absolute error."""
    if pred.shape != _t(target).shape:
        raise ShapeError(f"prediction {pred.shape} and target {_t(target).shape} differ")
    return mean(abs(sub(pred, target)))


def kaiming_std(fan_in, gain=math.sqrt(2.0)):
    return gain / math.sqrt(fan_in)
