"""Encoder f(.) and projector g(.) built on the autodiff engine."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict

import numpy as np

from ..errors import ShapeError
from .autodiff import (
    Tensor,
    adaptive_avg_pool2d,
    add,
    batch_norm,
    conv2d,
    elu,
    l2_normalize,
    linear,
    relu,
    reshape,
)


class Module:
    """Minimal parameter container with named parameters, buffers and train/eval mode."""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._buffers: Dict[str, np.ndarray] = {}
        self._children: Dict[str, "Module"] = {}
        self.training = True

    def add_param(self, name, value, dtype=np.float32) -> Tensor:
        t = Tensor(np.asarray(value, dtype=dtype), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_buffer(self, name, value, dtype=np.float32) -> np.ndarray:
        self._buffers[name] = np.asarray(value, dtype=dtype).copy()
        return self._buffers[name]

    def add_child(self, name, module):
        self._children[name] = module
        return module

    def named_parameters(self, prefix="") -> Dict[str, Tensor]:
        out = {prefix + k: v for k, v in self._params.items()}
        for cname, child in self._children.items():
            out.update(child.named_parameters(f"{prefix}{cname}."))
        return out

    def named_buffers(self, prefix="") -> Dict[str, np.ndarray]:
        out = {prefix + k: v for k, v in self._buffers.items()}
        for cname, child in self._children.items():
            out.update(child.named_buffers(f"{prefix}{cname}."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def train(self, mode: bool = True):
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag: bool):
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {k: v.data.copy() for k, v in self.named_parameters().items()}
        state.update({k: v.copy() for k, v in self.named_buffers().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        params, buffers = self.named_parameters(), self.named_buffers()
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise ShapeError(f"state is missing entries: {sorted(missing)[:5]}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ShapeError(f"{k}: expected shape {p.shape}, got {state[k].shape}")
            p.data = np.array(state[k], dtype=p.dtype)
        for k, b in buffers.items():
            if state[k].shape != b.shape:
                raise ShapeError(f"{k}: expected shape {b.shape}, got {state[k].shape}")
            b[...] = state[k]
        return self

    def astype(self, dtype):
        """Cast parameters and buffers in place (used to run gradient checks at 64-bit)."""
        for p in self.named_parameters().values():
            p.data = p.data.astype(dtype)
        for m in self._iter_modules():
            for k in m._buffers:
                m._buffers[k] = m._buffers[k].astype(dtype)
        return self

    def _iter_modules(self):
        yield self
        for child in self._children.values():
            yield from child._iter_modules()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _kaiming(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv2d(Module):
    def __init__(self, cin, cout, kernel, stride=1, padding=0, rng=None, name="conv"):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.stride, self.padding, self.name = stride, padding, name
        self.weight = self.add_param("weight", _kaiming(rng, (cout, cin, kernel, kernel), cin * kernel * kernel))

    def forward(self, x):
        return conv2d(x, self.weight, self.stride, self.padding, name=self.name)


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5, name="bn"):
        super().__init__()
        self.momentum, self.eps, self.name = momentum, eps, name
        self.gamma = self.add_param("gamma", np.ones(channels))
        self.beta = self.add_param("beta", np.zeros(channels))
        self.add_buffer("running_mean", np.zeros(channels))
        self.add_buffer("running_var", np.ones(channels))

    def forward(self, x):
        return batch_norm(
            x,
            self.gamma,
            self.beta,
            self._buffers["running_mean"],
            self._buffers["running_var"],
            self.training,
            self.momentum,
            self.eps,
            name=self.name,
        )


class Linear(Module):
    def __init__(self, fan_in, fan_out, rng=None, name="linear"):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.name = name
        self.weight = self.add_param("weight", _kaiming(rng, (fan_out, fan_in), fan_in))
        self.bias = self.add_param("bias", np.zeros(fan_out))

    def forward(self, x):
        return linear(x, self.weight, self.bias, name=self.name)


class ResidualBlock(Module):
    """conv-BN-ELU, conv-BN, plus identity or strided 1x1 shortcut, then ELU."""

    def __init__(self, cin, cout, stride=2, rng=None, name="block"):
        super().__init__()
        self.conv1 = self.add_child("conv1", Conv2d(cin, cout, 3, stride, 1, rng, f"{name}.conv1"))
        self.bn1 = self.add_child("bn1", BatchNorm2d(cout, name=f"{name}.bn1"))
        self.conv2 = self.add_child("conv2", Conv2d(cout, cout, 3, 1, 1, rng, f"{name}.conv2"))
        self.bn2 = self.add_child("bn2", BatchNorm2d(cout, name=f"{name}.bn2"))
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = self.add_child("shortcut", Conv2d(cin, cout, 1, stride, 0, rng, f"{name}.shortcut"))

    def forward(self, x):
        y = elu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        skip = x if self.shortcut is None else self.shortcut(x)
        return elu(add(y, skip))


@dataclass(frozen=True)
class EncoderConfig:
    in_shape: tuple = (4, 129, 43)
    widths: tuple = (8, 16, 32, 64)
    pool: tuple = (2, 1)

    @property
    def latent_dim(self) -> int:
        return self.widths[-1] * self.pool[0] * self.pool[1]

    def to_dict(self):
        return {k: list(v) for k, v in asdict(self).items()}


class Encoder(Module):
    """STFT-feature CNN: strided stem conv-BN-ELU, three strided residual blocks, pooled and flattened."""

    def __init__(self, config: EncoderConfig = EncoderConfig(), seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.config = config
        w = config.widths
        self.stem = self.add_child("stem", Conv2d(config.in_shape[0], w[0], 3, 2, 1, rng, "stem"))
        self.stem_bn = self.add_child("stem_bn", BatchNorm2d(w[0], name="stem_bn"))
        self.blocks = [
            self.add_child(f"block{i}", ResidualBlock(w[i], w[i + 1], 2, rng, f"block{i}"))
            for i in range(len(w) - 1)
        ]

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def forward(self, x):
        x = x if isinstance(x, Tensor) else Tensor(x)
        if tuple(x.shape[1:]) != tuple(self.config.in_shape):
            raise ShapeError(f"stem: expected input [B, {', '.join(map(str, self.config.in_shape))}], got {list(x.shape)}")
        h = elu(self.stem_bn(self.stem(x)))
        for block in self.blocks:
            h = block(h)
        h = adaptive_avg_pool2d(h, self.config.pool)
        return reshape(h, (h.shape[0], -1))


class Projector(Module):
    """Linear-ReLU-Linear followed by L2 normalization onto the unit sphere."""

    def __init__(self, d: int, m: int, seed: int = 1):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.fc1 = self.add_child("fc1", Linear(d, d, rng, "projector.fc1"))
        self.fc2 = self.add_child("fc2", Linear(d, m, rng, "projector.fc2"))

    def forward(self, h):
        h = h if isinstance(h, Tensor) else Tensor(h)
        return l2_normalize(self.fc2(relu(self.fc1(h))))


class ContraWRNet(Module):
    """Encoder plus projector; one instance each for the online and target branch."""

    def __init__(self, config: EncoderConfig = EncoderConfig(), proj_dim: int = None, seed: int = 0):
        super().__init__()
        self.encoder = self.add_child("encoder", Encoder(config, seed))
        m = config.latent_dim if proj_dim is None else proj_dim
        self.projector = self.add_child("projector", Projector(config.latent_dim, m, seed + 1))

    def forward(self, x):
        return self.projector(self.encoder(x))


def encode(encoder: Encoder, features, mode: str = "eval") -> Tensor:
    encoder.train(mode == "train")
    return encoder(features)


def project(projector: Projector, h) -> Tensor:
    return projector(h)
