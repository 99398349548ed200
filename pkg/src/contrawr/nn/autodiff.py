"""A small reverse-mode autodiff engine over numpy arrays.

Only the operations the encoder, projector and contrastive losses need are
provided. Each op records its parents and a closure mapping the output
gradient to one gradient per parent; ``Tensor.backward`` walks the graph in
reverse topological order and accumulates into leaf ``.grad`` arrays.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractError, ShapeError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __float__(self):
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None, retain_graph: bool = False):
        """Populate ``.grad`` on every leaf that requires it.

        Only scalar outputs may be differentiated without an explicit
        seed gradient. Intermediate nodes release their closures afterwards
        unless ``retain_graph`` is set.
        """
        if grad is None:
            if self.data.size != 1:
                raise ContractError(f"backward() needs a scalar output, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            raise ContractError("output does not depend on any tensor that requires grad")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg
            if not retain_graph:
                node._parents, node._backward = (), None

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other, self.dtype)
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(as_tensor(other, self.dtype), power(self, -1.0))

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return tsum(self, axis, keepdims) * (1.0 / n)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype) if dtype is not None else np.asarray(x)
    return Tensor(arr)


def _result(data, parents, backward) -> Tensor:
    rg = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=rg)
    if rg:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# elementwise --------------------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        ),
    )


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent
    return _result(out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    pos = a.data > 0
    neg_part = alpha * np.expm1(np.minimum(a.data, 0))
    out = np.where(pos, a.data, neg_part)
    return _result(out, (a,), lambda g: (g * np.where(pos, 1.0, neg_part + alpha).astype(a.dtype),))


# reductions and shape -----------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return _result(out, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor) -> Tensor:
    return _result(a.data.T, (a,), lambda g: (g.T,))


def concatenate(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, sizes, axis=axis)),
    )


def matmul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = g @ b.data.T if b.ndim == 2 else np.outer(g, b.data)
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.outer(a.data, g)
            elif b.ndim == 1:
                gb = a.data.T @ g
            else:
                gb = a.data.T @ g
        return ga, gb

    return _result(a.data @ b.data, (a, b), backward)


def logsumexp(a: Tensor, axis=-1) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    return _result(out, (a,), lambda g: (np.expand_dims(g, axis) * e / s,))


def softmax(a: Tensor, axis=-1) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _result(p, (a,), backward)


def l2_normalize(a: Tensor, axis=-1, eps: float = 1e-12) -> Tensor:
    """Scale rows onto the unit sphere; an all-zero row maps to the first basis vector."""
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    zero = norm <= eps
    safe = np.where(zero, 1.0, norm).astype(a.dtype)
    out = a.data / safe
    if zero.any():
        basis = np.zeros(a.shape[axis], dtype=a.dtype)
        basis[0] = 1.0
        shape = [1] * a.ndim
        shape[axis] = -1
        out = np.where(zero, basis.reshape(shape), out)

    def backward(g):
        gx = (g - out * (g * out).sum(axis=axis, keepdims=True)) / safe
        return (np.where(zero, 0.0, gx).astype(a.dtype),)

    return _result(out, (a,), backward)


# layers -------------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor = None, name: str = "linear") -> Tensor:
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"{name}: expected {weight.shape[1]} input features, got {x.shape[-1]}")
    out = matmul(x, transpose(weight))
    return out if bias is None else add(out, bias)


def conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0, name: str = "conv") -> Tensor:
    """2-D cross-correlation of [B, C, H, W] by [O, C, kh, kw] via im2col."""
    if x.ndim != 4:
        raise ShapeError(f"{name}: expected a 4-D input, got shape {x.shape}")
    B, C, H, W = x.shape
    O, Ci, kh, kw = weight.shape
    if C != Ci:
        raise ShapeError(f"{name}: expected {Ci} input channels, got {C}")
    s, p = stride, padding
    Ho = (H + 2 * p - kh) // s + 1
    Wo = (W + 2 * p - kw) // s + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"{name}: input {H}x{W} too small for kernel {kh}x{kw}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, : s * (Ho - 1) + 1 : s, : s * (Wo - 1) + 1 : s]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    wmat = weight.data.reshape(O, -1)
    out = (cols @ wmat.T).reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

    def backward(g):
        gf = g.transpose(0, 2, 3, 1).reshape(-1, O)
        gw = (gf.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (gf @ wmat).reshape(B, Ho, Wo, C, kh, kw)
            dxp = np.zeros(xp.shape, dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + s * (Ho - 1) + 1 : s, j : j + s * (Wo - 1) + 1 : s] += dcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = dxp[:, :, p : p + H, p : p + W] if p else dxp
        return gx, gw

    return _result(np.ascontiguousarray(out), (x, weight), backward)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
    name: str = "bn",
) -> Tensor:
    """Per-channel batch normalization of [B, C, H, W].

    In training mode the batch statistics are used and the running buffers
    are updated in place; in eval mode the running buffers are used.
    """
    if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"{name}: expected [B, {gamma.shape[0]}, H, W], got {x.shape}")
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    n = x.shape[0] * x.shape[2] * x.shape[3]
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))
    else:
        mu, var = running_mean, running_var
    invstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(shape).astype(x.dtype)) * invstd.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gxhat = g * gamma.data.reshape(shape)
        if training:
            gx = (invstd.reshape(shape) / n) * (
                n * gxhat
                - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            gx = gxhat * invstd.reshape(shape)
        return gx, ggamma, gbeta

    return _result(out, (x, gamma, beta), backward)


def _bins(size: int, n_out: int):
    return [((i * size) // n_out, -(-((i + 1) * size) // n_out)) for i in range(n_out)]


def adaptive_avg_pool2d(x: Tensor, output_size) -> Tensor:
    """Average over a fixed grid of (possibly overlapping) bins, as in common DL frameworks."""
    B, C, H, W = x.shape
    oh, ow = output_size
    hb, wb = _bins(H, oh), _bins(W, ow)
    out = np.empty((B, C, oh, ow), dtype=x.dtype)
    for i, (h0, h1) in enumerate(hb):
        for j, (w0, w1) in enumerate(wb):
            out[:, :, i, j] = x.data[:, :, h0:h1, w0:w1].mean(axis=(2, 3))

    def backward(g):
        gx = np.zeros(x.shape, dtype=x.dtype)
        for i, (h0, h1) in enumerate(hb):
            for j, (w0, w1) in enumerate(wb):
                gx[:, :, h0:h1, w0:w1] += g[:, :, i, j][:, :, None, None] / ((h1 - h0) * (w1 - w0))
        return (gx,)

    return _result(out, (x,), backward)
