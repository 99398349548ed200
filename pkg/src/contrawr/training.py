"""Dual-network pretext training: Adam on the online branch, EMA on the target branch."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentPolicy, random_augment
from .config import RunConfig
from .contrastive import LossConfig, ProjectionBatch, batch_loss
from .errors import ConfigError, ContractError, NumericError, ParameterError
from .nn.autodiff import Tensor, no_grad
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import ContraWRNet, Encoder, EncoderConfig
from .nn.optim import AdamState, adam_step
from .signals import Split
from .spectral import STFTConfig, batch_features, feature_shape

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "mean_loss", "wall_seconds")


@dataclass(frozen=True)
class PretextConfig:
    epochs: int = 100
    batch_size: int = 256
    ema_lambda: float = 0.99
    lr: float = 2e-4
    weight_decay: float = 1e-4
    loss: LossConfig = LossConfig()
    augment: AugmentPolicy = AugmentPolicy()
    stft: STFTConfig = STFTConfig()
    widths: tuple = (8, 16, 32, 64)
    pool: tuple = (2, 1)
    proj_dim: int = 128
    seed: int = 0
    checkpoint_every: int = 10

    def __post_init__(self):
        if not 0 <= self.ema_lambda <= 1:
            raise ConfigError("train.ema_lambda must lie in [0, 1]")
        if self.batch_size < 2 or self.epochs < 0 or self.checkpoint_every < 1:
            raise ConfigError("need train.batch_size >= 2, train.epochs >= 0, train.checkpoint_every >= 1")

    @classmethod
    def from_run_config(cls, rc: RunConfig) -> "PretextConfig":
        return cls(
            epochs=rc["train.epochs"],
            batch_size=rc["train.batch_size"],
            ema_lambda=rc["train.ema_lambda"],
            lr=rc["train.lr"],
            weight_decay=rc["train.weight_decay"],
            loss=rc.loss(),
            augment=rc.augment_policy(),
            stft=rc.stft(),
            widths=rc["model.widths"],
            pool=rc["model.pool"],
            proj_dim=rc["model.proj_dim"],
            seed=rc["train.seed"],
            checkpoint_every=rc["train.checkpoint_every"],
        )

    def to_run_config(self, base: RunConfig = None) -> RunConfig:
        rc = RunConfig(base)
        a, lc, s = self.augment, self.loss, self.stft
        return rc.update_from(
            {
                "train.epochs": self.epochs,
                "train.batch_size": self.batch_size,
                "train.ema_lambda": self.ema_lambda,
                "train.lr": self.lr,
                "train.weight_decay": self.weight_decay,
                "train.seed": self.seed,
                "train.checkpoint_every": self.checkpoint_every,
                "loss.variant": lc.variant,
                "loss.sigma": lc.sigma,
                "loss.delta": lc.delta,
                "loss.temperature": lc.temperature,
                "loss.exclude_self": lc.exclude_self,
                "loss.world_grad": lc.world_grad,
                "augment.enabled": a.enabled,
                "augment.bands": a.bandpass_bands,
                "augment.noise_degree": a.noise_degree,
                "augment.flip_pairs": a.flip_pairs,
                "augment.clip_bound": a.clip_bound,
                "stft.window": s.window,
                "stft.hop": s.hop,
                "stft.log_amplitude": s.log_amplitude,
                "model.widths": self.widths,
                "model.pool": self.pool,
                "model.proj_dim": self.proj_dim,
            }
        )

    def encoder_config(self, in_shape) -> EncoderConfig:
        return EncoderConfig(tuple(in_shape), tuple(self.widths), tuple(self.pool))


@dataclass
class DualNetworkState:
    online: ContraWRNet
    target: ContraWRNet
    optimizer: AdamState = field(default_factory=AdamState)
    ema_lambda: float = 0.99
    step: int = 0
    epoch: int = 0


def init_state(config: PretextConfig, in_shape) -> DualNetworkState:
    """Fresh online network; the target starts as an exact copy that never requires grad."""
    enc = config.encoder_config(in_shape)
    online = ContraWRNet(enc, config.proj_dim, seed=config.seed)
    target = ContraWRNet(enc, config.proj_dim, seed=config.seed)
    target.load_state_dict(online.state_dict())
    target.requires_grad_(False)
    return DualNetworkState(online, target, AdamState(), config.ema_lambda)


def ema_update(online, target, lam: float):
    """phi <- lam * phi + (1 - lam) * theta for every parameter; buffers are copied from online."""
    if not 0 <= lam <= 1:
        raise ParameterError("EMA weight must lie in [0, 1]")
    theta, phi = online.named_parameters(), target.named_parameters()
    if theta.keys() != phi.keys():
        raise ContractError("online and target networks have different parameter sets")
    for name, p in theta.items():
        t = phi[name]
        if t.shape != p.shape:
            raise ContractError(f"{name}: online shape {p.shape} != target shape {t.shape}")
        if lam == 0:
            t.data = p.data.astype(t.dtype, copy=True)
        else:
            # same convex combination, written so that phi == theta stays bitwise fixed
            t.data = (t.data + (1 - lam) * (p.data - t.data)).astype(t.dtype)
    tb = target.named_buffers()
    for name, b in online.named_buffers().items():
        tb[name][...] = b
    return target


def pretext_step(epoch_batch, state: DualNetworkState, config: PretextConfig, rng: np.random.Generator):
    """One update on a batch of raw epochs; returns ``(loss, state)``."""
    if len(epoch_batch) < 2:
        raise ParameterError("a pretext batch needs at least 2 epochs")
    view1 = [random_augment(e, config.augment, rng) for e in epoch_batch]
    view2 = [random_augment(e, config.augment, rng) for e in epoch_batch]
    x1 = batch_features(view1, config.stft)
    x2 = batch_features(view2, config.stft)

    online, target = state.online, state.target
    online.train()
    target.train()
    online.zero_grad()
    anchors = online(Tensor(x1))
    with no_grad():
        positives = target(Tensor(x2))
    loss = batch_loss(ProjectionBatch(anchors, positives), config.loss)
    value = float(loss)
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss at step {state.step}")
    loss.backward()
    params = online.named_parameters()
    adam_step(params, {k: p.grad for k, p in params.items()}, state.optimizer, config.lr, config.weight_decay)
    ema_update(online, target, state.ema_lambda)
    state.step += 1
    return value, state


# checkpoints -------------------------------------------------------------------


def save_state(path, state: DualNetworkState, run_config: RunConfig, in_shape) -> Path:
    arrays = {f"online/{k}": v for k, v in state.online.state_dict().items()}
    arrays.update({f"target/{k}": v for k, v in state.target.state_dict().items()})
    arrays.update({f"adam_m/{k}": v for k, v in state.optimizer.m.items()})
    arrays.update({f"adam_v/{k}": v for k, v in state.optimizer.v.items()})
    meta = {
        "config": run_config.to_json(),
        "in_shape": list(in_shape),
        "step": state.step,
        "epoch": state.epoch,
        "adam_step": state.optimizer.step,
        "ema_lambda": state.ema_lambda,
    }
    return save_checkpoint(path, arrays, meta)


def _section(arrays, prefix):
    n = len(prefix) + 1
    return {k[n:]: v for k, v in arrays.items() if k.startswith(prefix + "/")}


def load_state(path):
    """Rebuild ``(state, run_config, in_shape)`` from a checkpoint."""
    arrays, meta = load_checkpoint(path)
    rc = RunConfig.from_json(meta["config"])
    config = PretextConfig.from_run_config(rc)
    in_shape = tuple(meta["in_shape"])
    state = init_state(config, in_shape)
    state.online.load_state_dict(_section(arrays, "online"))
    state.target.load_state_dict(_section(arrays, "target"))
    state.optimizer = AdamState(_section(arrays, "adam_m"), _section(arrays, "adam_v"), meta["adam_step"])
    state.step, state.epoch, state.ema_lambda = meta["step"], meta["epoch"], meta["ema_lambda"]
    return state, rc, in_shape


def load_encoder(path) -> Encoder:
    state, _, _ = load_state(path)
    return state.online.encoder.eval()


# full run ----------------------------------------------------------------------


@dataclass
class PretextResult:
    checkpoint: Path
    metrics: Path
    epoch_losses: list
    step_losses: list
    state: DualNetworkState


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [b for b in (order[i : i + batch_size] for i in range(0, n, batch_size)) if len(b) >= 2]


def _write_metrics(path: Path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        w.writerows(rows)


def read_metrics(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_pretext(
    split: Split,
    config: PretextConfig,
    out_dir,
    resume_from=None,
    run_config: RunConfig = None,
    stop_after: int = None,
) -> PretextResult:
    """Train for ``config.epochs`` passes over the pretext group.

    Each pass shuffles with a generator seeded by ``(seed, epoch)``, so a run
    resumed from an epoch-boundary checkpoint replays the same batches and
    augmentations as an uninterrupted one. ``stop_after`` ends early after
    that many completed epochs (used to produce resumable checkpoints).
    """
    data = split.pretext.epochs
    if not data:
        raise ConfigError("pretext group is empty")
    if len(data) < 2:
        raise ConfigError("pretext group needs at least 2 epochs")
    C, N = split.pretext.shape
    config.augment.validate_for(C, split.pretext.sample_rate_hz)
    in_shape = feature_shape(C, N, config.stft.window, config.stft.hop)
    rc = config.to_run_config(run_config)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    rows = []
    if resume_from is not None:
        state, saved, saved_shape = load_state(resume_from)
        if tuple(saved_shape) != tuple(in_shape):
            raise ConfigError(f"checkpoint input shape {saved_shape} does not match data {in_shape}")
        if metrics_path.exists():
            rows = [
                [r["epoch"], r["mean_loss"], r["wall_seconds"]]
                for r in read_metrics(metrics_path)
                if int(r["epoch"]) <= state.epoch
            ]
    else:
        state = init_state(config, in_shape)
    _write_metrics(metrics_path, rows)

    epoch_losses, step_losses = [], []
    checkpoint = Path(resume_from) if resume_from is not None else None
    last = config.epochs if stop_after is None else min(config.epochs, stop_after)
    for e in range(state.epoch, last):
        t0 = time.perf_counter()
        rng = np.random.default_rng([config.seed, e])
        losses = []
        for idx in _batches(len(data), config.batch_size, rng):
            value, state = pretext_step([data[i] for i in idx], state, config, rng)
            losses.append(value)
        state.epoch = e + 1
        mean = float(np.mean(losses))
        epoch_losses.append(mean)
        step_losses.extend(losses)
        rows.append([state.epoch, repr(mean), f"{time.perf_counter() - t0:.3f}"])
        with open(metrics_path, "a", newline="") as fh:
            csv.writer(fh).writerow(rows[-1])
        log.info("epoch %d/%d loss %.6f", state.epoch, config.epochs, mean)
        if state.epoch % config.checkpoint_every == 0 or state.epoch == last:
            checkpoint = save_state(out_dir / f"checkpoint_epoch{state.epoch:04d}.npz", state, rc, in_shape)
    if checkpoint is None:
        checkpoint = save_state(out_dir / "checkpoint_epoch0000.npz", state, rc, in_shape)
    return PretextResult(checkpoint, metrics_path, epoch_losses, step_losses, state)
