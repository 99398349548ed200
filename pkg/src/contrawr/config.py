"""Flat ``section.key`` run configuration: schema, INI loading, overrides and serialization."""

from __future__ import annotations

import configparser
import json
from pathlib import Path

from .augment import METHODS, AugmentPolicy
from .contrastive import LossConfig
from .errors import ConfigError
from .nn.layers import EncoderConfig
from .spectral import STFTConfig


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _split(v):
    if isinstance(v, str):
        return [p.strip() for p in v.split(",") if p.strip()]
    return list(v)


def _strs(v):
    return tuple(str(x) for x in _split(v))


def _ints(v):
    return tuple(int(x) for x in _split(v))


def _floats(v):
    return tuple(float(x) for x in _split(v))


def _pairs(cast):
    def parse(v):
        out = []
        for item in _split(v):
            if isinstance(item, str):
                a, b = item.split(":")
            else:
                a, b = item
            out.append((cast(a), cast(b)))
        return tuple(out)

    return parse


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(":".join(map(str, x)) if isinstance(x, tuple) else str(x) for x in v)
    return str(v)


# key -> (parser, default)
SCHEMA = {
    "data.n_subjects": (int, 20),
    "data.epochs_per_subject": (int, 50),
    "data.channels": (int, 2),
    "data.samples": (int, 3000),
    "data.fs": (float, 100.0),
    "data.clip_bound": (float, 50.0),
    "data.seed": (int, 0),
    "split.ratios": (_floats, (0.5, 0.25, 0.25)),
    "split.seed": (int, 0),
    "augment.enabled": (_strs, METHODS),
    "augment.bands": (_pairs(float), ((1.0, 5.0), (30.0, 49.0))),
    "augment.noise_degree": (float, 0.05),
    "augment.flip_pairs": (_pairs(int), ((0, 1),)),
    "augment.clip_bound": (float, 50.0),
    "stft.window": (int, 256),
    "stft.hop": (int, 64),
    "stft.log_amplitude": (_bool, False),
    "model.widths": (_ints, (8, 16, 32, 64)),
    "model.pool": (_ints, (2, 1)),
    "model.proj_dim": (int, 128),
    "loss.variant": (str, "contrawr_plus"),
    "loss.sigma": (float, 2.0),
    "loss.delta": (float, 0.2),
    "loss.temperature": (float, 2.0),
    "loss.exclude_self": (_bool, False),
    "loss.world_grad": (_bool, False),
    "train.epochs": (int, 100),
    "train.batch_size": (int, 256),
    "train.ema_lambda": (float, 0.99),
    "train.lr": (float, 2e-4),
    "train.weight_decay": (float, 1e-4),
    "train.seed": (int, 0),
    "train.checkpoint_every": (int, 10),
    "probe.max_iter": (int, 500),
    "probe.l2": (float, 1.0),
    "probe.standardize": (_bool, True),
    "compare.seeds": (int, 5),
    "compare.variants": (_strs, ("untrained", "nce", "contrawr", "contrawr_plus")),
}


class RunConfig(dict):
    """A validated mapping of every schema key to a typed value."""

    def __init__(self, values=None):
        super().__init__({k: d for k, (_, d) in SCHEMA.items()})
        if values:
            self.update_from(values)

    def update_from(self, values) -> "RunConfig":
        for key, raw in dict(values).items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key: {key}")
            parser = SCHEMA[key][0]
            try:
                self[key] = parser(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
        return self

    def replace(self, **values) -> "RunConfig":
        """Copy with overrides; keyword names use ``__`` for the dot (``loss__sigma``)."""
        out = RunConfig(self)
        return out.update_from({k.replace("__", "."): v for k, v in values.items()})

    def to_json(self) -> str:
        return json.dumps({k: self[k] for k in SCHEMA}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(json.loads(text))

    def text(self, key: str) -> str:
        """Value of ``key`` in INI syntax, e.g. ``1:5, 30:49`` for band lists."""
        return _fmt(self[key])

    def to_ini(self) -> str:
        sections = {}
        for key in SCHEMA:
            sec, name = key.split(".", 1)
            sections.setdefault(sec, []).append(f"{name} = {self.text(key)}")
        return "\n\n".join(f"[{s}]\n" + "\n".join(lines) for s, lines in sections.items()) + "\n"

    # typed views -----------------------------------------------------------

    def augment_policy(self) -> AugmentPolicy:
        try:
            return AugmentPolicy(
                enabled=self["augment.enabled"],
                bandpass_bands=self["augment.bands"],
                noise_degree=self["augment.noise_degree"],
                flip_pairs=self["augment.flip_pairs"],
                clip_bound=self["augment.clip_bound"],
            )
        except ValueError as exc:
            raise ConfigError(f"augment: {exc}") from exc

    def stft(self) -> STFTConfig:
        if self["stft.window"] < 2 or self["stft.window"] % 2 or self["stft.hop"] < 1:
            raise ConfigError("stft.window must be even and >= 2, stft.hop >= 1")
        return STFTConfig(self["stft.window"], self["stft.hop"], self["stft.log_amplitude"])

    def loss(self) -> LossConfig:
        try:
            return LossConfig(
                variant=self["loss.variant"],
                sigma=self["loss.sigma"],
                delta=self["loss.delta"],
                temperature=self["loss.temperature"],
                exclude_self=self["loss.exclude_self"],
                world_grad=self["loss.world_grad"],
            )
        except ValueError as exc:
            raise ConfigError(f"loss: {exc}") from exc

    def encoder(self, in_shape) -> EncoderConfig:
        if len(self["model.widths"]) < 2 or len(self["model.pool"]) != 2:
            raise ConfigError("model.widths needs >= 2 entries and model.pool exactly 2")
        return EncoderConfig(tuple(in_shape), self["model.widths"], self["model.pool"])


def load_config(path=None, overrides=None) -> RunConfig:
    """Defaults, then an INI file's ``[section] key = value`` entries, then overrides."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg.update_from({f"{sec}.{k}": v for sec in parser.sections() for k, v in parser.items(sec)})
    if overrides:
        cfg.update_from(overrides)
    return cfg
