"""Differentiable operations on :class:`Tensor`.

Each op computes its forward value with numpy and registers a closure that maps
the output gradient to one gradient per input (``None`` for constants).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor

_result = Tensor._result


def unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- arithmetic -------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return unbroadcast(g, sa), unbroadcast(g, sb)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return unbroadcast(g, sa), unbroadcast(-g, sb)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def backward(g):
        ga = unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(ad * bd, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def backward(g):
        ga = unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = unbroadcast(-g * ad / (bd * bd), bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(ad / bd, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            if ad.ndim > 2 and bd.ndim == 2:
                # common x[..., k] @ W[k, n] case: fold batch axes into rows
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _result(ad @ bd, (a, b), backward, "matmul")


# -- reductions and reshaping --------------------------------------------------------


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([shape[ax] for ax in axes]))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _result(np.asarray(a.data.mean(axis=axis, keepdims=keepdims)), (a,), backward, "mean")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        if _is_advanced(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _result(np.array(a.data[index]), (a,), backward, "getitem")


def _is_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


# -- pointwise nonlinearities --------------------------------------------------------


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    with np.errstate(divide="ignore"):
        out = np.log(ad)
    return _result(out, (a,), lambda g: (g / ad,), "log")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _result(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    keep = a.data > 0
    return _result(np.where(keep, a.data, 0.0), (a,), lambda g: (g * keep,), "relu")


def swish(a) -> Tensor:
    """x * sigmoid(x)."""
    a = as_tensor(a)
    x = a.data
    s = _sigmoid(x)

    def backward(g):
        return (g * (s + x * s * (1.0 - s)),)

    return _result(x * s, (a,), backward, "swish")


def glu(a, axis: int = -1) -> Tensor:
    """Gated linear unit: first half times sigmoid of the second half."""
    a = as_tensor(a)
    if a.shape[axis] % 2:
        raise ShapeError(f"glu needs an even size along axis {axis}, got {a.shape[axis]}")
    first, gate = np.split(a.data, 2, axis=axis)
    s = _sigmoid(gate)

    def backward(g):
        return (np.concatenate([g * s, g * first * s * (1.0 - s)], axis=axis),)

    return _result(first * s, (a,), backward, "glu")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (a,), backward, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _result(y, (a,), backward, "log_softmax")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gain`` and shift by ``bias``."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    gd = gain.data

    def backward(g):
        dxhat = g * gd
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead) if gain.requires_grad else None
        dbias = g.sum(axis=lead) if bias.requires_grad else None
        return dx, dgain, dbias

    return _result(xhat * gd + bias.data, (x, gain, bias), backward, "layer_norm")


def dropout(x, rate: float, rng: Optional[np.random.Generator] = None, training: bool = True) -> Tensor:
    """Inverted dropout; identity when ``training`` is false or ``rate`` is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a generator")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """1-D convolution over time for channel-last input.

    Args:
        x: ``[T, C_in]`` or ``[B, T, C_in]``.
        weight: ``[K, C_in // groups, C_out]``.
        bias: optional ``[C_out]``.

    Returns:
        ``[B, T_out, C_out]`` (or ``[T_out, C_out]`` for unbatched input) with
        ``T_out = (T + 2*padding - K) // stride + 1``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or weight.ndim != 3:
        raise ShapeError("conv1d expects x [B,T,C] and weight [K,C_in/groups,C_out]")
    B, T, C_in = xd.shape
    K, cg_in, C_out = weight.shape
    if stride < 1 or padding < 0 or groups < 1:
        raise ValueError("stride >= 1, padding >= 0, groups >= 1 required")
    if C_in % groups or C_out % groups or cg_in != C_in // groups:
        raise ShapeError(f"conv1d channels C_in={C_in}, C_out={C_out} inconsistent with groups={groups}")
    T_out = (T + 2 * padding - K) // stride + 1
    if T_out < 1:
        raise ShapeError(f"conv1d output length {T_out} < 1 (T={T}, K={K}, stride={stride}, padding={padding})")
    cg_out = C_out // groups

    xp = np.pad(xd, ((0, 0), (padding, padding), (0, 0))) if padding else xd
    span = stride * (T_out - 1) + 1
    # cols[b, t, k, c] = xp[b, t*stride + k, c]
    cols = np.stack([xp[:, k : k + span : stride, :] for k in range(K)], axis=2)
    wd = weight.data
    depthwise = groups == C_in and cg_in == 1 and cg_out == 1
    if depthwise:
        out = np.einsum("btkc,kc->btc", cols, wd[:, 0, :])
    elif groups == 1:
        out = cols.reshape(B, T_out, K * C_in) @ wd.reshape(K * C_in, C_out)
    else:
        cols_g = cols.reshape(B, T_out, K, groups, cg_in)
        w_g = wd.reshape(K, cg_in, groups, cg_out)
        out = np.einsum("btkgc,kcgo->btgo", cols_g, w_g).reshape(B, T_out, C_out)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        g3 = g[None] if squeeze else g
        if depthwise:
            dcols = g3[:, :, None, :] * wd[:, 0, :][None, None]
            dw = np.einsum("btkc,btc->kc", cols, g3)[:, None, :]
        elif groups == 1:
            dcols = (g3 @ wd.reshape(K * C_in, C_out).T).reshape(B, T_out, K, C_in)
            dw = (cols.reshape(-1, K * C_in).T @ g3.reshape(-1, C_out)).reshape(K, C_in, C_out)
        else:
            gg = g3.reshape(B, T_out, groups, cg_out)
            dcols = np.einsum("btgo,kcgo->btkgc", gg, w_g).reshape(B, T_out, K, C_in)
            dw = np.einsum("btkgc,btgo->kcgo", cols_g, gg).reshape(K, cg_in, C_out)
        dxp = np.zeros_like(xp)
        for k in range(K):
            dxp[:, k : k + span : stride, :] += dcols[:, :, k, :]
        dx = dxp[:, padding : padding + T, :] if padding else dxp
        if squeeze:
            dx = dx[0]
        grads = [dx, dw]
        if bias is not None:
            grads.append(g3.sum(axis=(0, 1)))
        return tuple(grads)

    if squeeze:
        out = out[0]
    return _result(out, parents, backward, "conv1d")


def custom(data: np.ndarray, parents: Sequence[Tensor], backward, name: str) -> Tensor:
    """Record an externally computed op (e.g. a loss with a hand-derived gradient)."""
    return _result(np.asarray(data), tuple(parents), backward, name)
