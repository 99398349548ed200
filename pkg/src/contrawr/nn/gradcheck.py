"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def finite_difference_check(fn, point, step: float = 1e-5, indices=None, floor: float = 1e-8):
    """Largest relative error between the autodiff gradient of ``fn`` and central differences.

    ``fn`` maps a Tensor shaped like ``point`` to a scalar Tensor. ``indices``
    optionally restricts the comparison to a subset of flat coordinates.
    Returns ``(max_rel_error, analytic, numeric)`` over the checked coordinates.
    """
    x0 = np.array(point, dtype=np.float64)
    t = Tensor(x0.copy(), requires_grad=True)
    fn(t).backward()
    analytic_full = t.grad.reshape(-1)
    idx = np.arange(x0.size) if indices is None else np.asarray(indices)
    numeric = np.empty(idx.size)
    flat = x0.reshape(-1)
    for n, i in enumerate(idx):
        xp, xm = flat.copy(), flat.copy()
        xp[i] += step
        xm[i] -= step
        fp = float(fn(Tensor(xp.reshape(x0.shape))).data)
        fm = float(fn(Tensor(xm.reshape(x0.shape))).data)
        numeric[n] = (fp - fm) / (2 * step)
    analytic = analytic_full[idx]
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    err = np.abs(analytic - numeric) / denom
    return float(err.max()), analytic, numeric


def check_parameter(loss_fn, param: Tensor, step: float = 1e-5, indices=None, floor: float = 1e-8):
    """Same comparison for ``loss_fn()`` against one module parameter, perturbed in place."""
    base = param.data.copy()
    param.grad = None
    loss_fn().backward()
    analytic = param.grad.reshape(-1).copy()
    idx = np.arange(base.size) if indices is None else np.asarray(indices)

    def at(i, delta):
        flat = base.copy().reshape(-1)
        flat[i] += delta
        param.data = flat.reshape(base.shape)
        return float(loss_fn().data)

    numeric = np.array([(at(i, step) - at(i, -step)) / (2 * step) for i in idx])
    param.data = base
    analytic = analytic[idx]
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max()), analytic, numeric
