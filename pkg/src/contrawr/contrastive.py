"""Similarity measures, world representations and the contrastive objectives.

All functions take numpy arrays or Tensors with vectors along the last axis
and return Tensors, so they can sit inside a training graph or be evaluated
directly (``float(result)`` / ``result.data``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError
from .nn.autodiff import Tensor, as_tensor, exp, logsumexp, matmul, relu, softmax, concatenate

VARIANTS = ("contrawr", "contrawr_plus", "nce")


def margin_bound(sigma: float) -> float:
    """Largest possible gap between two Gaussian similarities on the unit ball.

    Distances inside the ball lie in [0, 2], so the gap is at most
    exp(0) - exp(-4 / (2 sigma^2)).
    """
    return 1.0 - math.exp(-2.0 / sigma**2)


@dataclass(frozen=True)
class LossConfig:
    variant: str = "contrawr_plus"
    sigma: float = 2.0
    delta: float = 0.2
    temperature: float = 2.0
    exclude_self: bool = False
    world_grad: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown loss variant {self.variant!r}, expected one of {VARIANTS}")
        if not self.sigma > 0 or not self.delta > 0 or not self.temperature > 0:
            raise ParameterError("sigma, delta and temperature must be positive")

    @property
    def delta_achievable(self) -> bool:
        return self.delta < margin_bound(self.sigma)


def _unit_tol(x: np.ndarray) -> float:
    return max(1e-6, 16 * float(np.finfo(x.dtype).eps))


@dataclass(frozen=True, eq=False)
class ProjectionBatch:
    """Online anchors and target positives, one unit-norm row per epoch."""

    anchors: Tensor
    positives: Tensor

    def __post_init__(self):
        a = as_tensor(self.anchors)
        p = as_tensor(self.positives, a.dtype)
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "positives", p)
        if a.ndim != 2 or a.shape != p.shape:
            raise ContractError(f"anchors {a.shape} and positives {p.shape} must be matching [M, m] arrays")
        if a.shape[0] < 2:
            raise ContractError("a projection batch needs M >= 2")
        for name, t in (("anchors", a), ("positives", p)):
            dev = np.abs(np.linalg.norm(t.data.astype(np.float64), axis=1) - 1).max()
            if dev > _unit_tol(t.data):
                raise ContractError(f"{name} rows are not unit-norm (max deviation {dev:.2e})")

    @property
    def size(self) -> int:
        return self.anchors.shape[0]


def gaussian_sim(z_i, z_j, sigma: float = 2.0) -> Tensor:
    """exp(-|z_i - z_j|^2 / (2 sigma^2)) along the last axis."""
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    z_i = as_tensor(z_i)
    diff = z_i - as_tensor(z_j, z_i.dtype)
    return exp((diff * diff).sum(axis=-1) * (-1.0 / (2 * sigma**2)))


def cosine_sim(z_i, z_j) -> Tensor:
    z_i = as_tensor(z_i)
    z_j = as_tensor(z_j, z_i.dtype)
    for name, t in (("z_i", z_i), ("z_j", z_j)):
        dev = np.abs(np.linalg.norm(t.data, axis=-1) - 1).max()
        if dev > 1e-4:
            raise ContractError(f"{name} is not unit-norm (deviation {dev:.2e})")
    return (z_i * z_j).sum(axis=-1)


def world_representation(Z) -> Tensor:
    """Batch mean of the projection rows, the Monte Carlo estimate of E[z_k]."""
    Z = as_tensor(Z)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise ParameterError("world representation needs a nonempty [M, m] batch")
    return Z.mean(axis=0)


def instance_weights(Z, z_i, T: float, mask=None) -> Tensor:
    """softmax_k(<z_k, z_i> / T); rows of ``z_i`` give one weight vector each.

    ``mask`` (same shape as the logits, True = keep) drops entries.
    """
    if not T > 0:
        raise ParameterError("temperature must be positive")
    Z = as_tensor(Z)
    z_i = as_tensor(z_i, Z.dtype)
    logits = matmul(z_i, Z.T) * (1.0 / T)
    if mask is not None:
        logits = logits + Tensor(np.where(mask, 0.0, -np.inf).astype(Z.dtype))
    return softmax(logits, axis=-1)


def instance_world_representation(Z, z_i, T: float = 2.0, mask=None) -> Tensor:
    """Softmax-weighted batch average sum_k w_k z_k with w_k proportional to exp(<z_k, z_i>/T)."""
    Z = as_tensor(Z)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise ParameterError("world representation needs a nonempty [M, m] batch")
    return matmul(instance_weights(Z, z_i, T, mask), Z)


def triplet_loss(z_i, z_j, z_w, delta: float = 0.2, sigma: float = 2.0) -> Tensor:
    """[sim(z_i, z_w) + delta - sim(z_i, z_j)]_+ per row; subgradient 0 at the hinge."""
    z_i = as_tensor(z_i)
    return relu(gaussian_sim(z_i, z_w, sigma) + delta - gaussian_sim(z_i, z_j, sigma))


def nce_loss(z_i, z_j, negatives) -> Tensor:
    """-log softmax of the positive cosine logit against K negative cosine logits."""
    z_i = as_tensor(z_i)
    negatives = as_tensor(negatives, z_i.dtype)
    if negatives.ndim != 2 or negatives.shape[0] < 1:
        raise ParameterError("nce_loss needs at least one negative")
    pos = (z_i * as_tensor(z_j, z_i.dtype)).sum(axis=-1, keepdims=True)
    logits = concatenate([pos, matmul(negatives, z_i)], axis=0)
    return logsumexp(logits, axis=0) - pos.sum()


def _detached(t: Tensor, keep: bool) -> Tensor:
    return t if keep else t.detach()


def per_anchor_losses(batch: ProjectionBatch, config: LossConfig) -> Tensor:
    za, zp = batch.anchors, batch.positives
    M = batch.size
    if config.variant == "nce":
        logits = matmul(za, zp.T)
        diag = (logits * Tensor(np.eye(M, dtype=za.dtype))).sum(axis=1)
        return logsumexp(logits, axis=1) - diag

    world_src = _detached(zp, config.world_grad)
    if config.variant == "contrawr":
        if config.exclude_self:
            total = world_src.sum(axis=0)
            worlds = (total - world_src) * (1.0 / (M - 1))
        else:
            worlds = world_representation(world_src)
    else:
        mask = ~np.eye(M, dtype=bool) if config.exclude_self else None
        query = _detached(za, config.world_grad)
        worlds = instance_world_representation(world_src, query, config.temperature, mask)
    return triplet_loss(za, zp, worlds, config.delta, config.sigma)


def batch_loss(batch: ProjectionBatch, config: LossConfig = LossConfig()) -> Tensor:
    """Mean per-anchor loss over the batch.

    contrawr contrasts every anchor with one shared batch mean; contrawr_plus
    with its own softmax-weighted mean; nce uses the other rows' positives as
    negatives. The world reference is a constant unless ``world_grad`` is set.
    """
    return per_anchor_losses(batch, config).mean()
