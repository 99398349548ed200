"""Adam with L2 weight decay folded into the gradient."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params,
    grads,
    state: AdamState,
    lr: float = 2e-4,
    weight_decay: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update, in place on ``params``.

    ``params`` maps names to Tensors, ``grads`` maps the same names to
    arrays; a missing or None gradient counts as zero. Weight decay is added
    to the gradient before the moment updates.
    """
    state.step += 1
    t = state.step
    c1 = 1 - beta1**t
    c2 = 1 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p.data) if g is None else g
        if weight_decay:
            g = g + weight_decay * p.data
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p.data = (p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return params, state
