"""Epoch data model, EPOC1/CSV file I/O, synthetic recordings and subject splits."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import FormatError, ParameterError, SplitError

STAGES = ("W", "N1", "N2", "N3", "R")
STAGE_INDEX = {s: i for i, s in enumerate(STAGES)}

# class k is dominated by band k
STAGE_BANDS = ((0.5, 4.0), (4.0, 7.0), (8.0, 12.0), (12.0, 16.0), (16.0, 25.0))

MIN_SAMPLES = 512
EPOCH_SECONDS = 30

MAGIC = b"EPOC1\0"
VERSION = 1
UNLABELED = 255
_HEADER = struct.Struct("<6sHIIfB32s")


@dataclass(frozen=True, eq=False)
class Epoch:
    """One C x N signal segment.

    Samples are stored as float32, the on-disk precision.
    """

    samples: np.ndarray
    sample_rate_hz: float
    subject_id: str
    label: Optional[str] = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float32)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ParameterError(f"samples must be a C x N matrix, got shape {x.shape}")
        if x.shape[0] < 1 or x.shape[1] < MIN_SAMPLES:
            raise ParameterError(f"need C >= 1 and N >= {MIN_SAMPLES}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ParameterError("samples contain NaN or Inf")
        if not self.sample_rate_hz > 0:
            raise ParameterError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.label is not None and self.label not in STAGE_INDEX:
            raise ParameterError(f"unknown stage label {self.label!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def with_samples(self, samples: np.ndarray) -> "Epoch":
        return replace(self, samples=samples)


@dataclass(frozen=True)
class Dataset:
    epochs: tuple
    clip_bound: float = 50.0
    subjects: frozenset = field(default=None)

    def __post_init__(self):
        epochs = tuple(self.epochs)
        object.__setattr__(self, "epochs", epochs)
        if self.subjects is None:
            object.__setattr__(self, "subjects", frozenset(e.subject_id for e in epochs))
        else:
            object.__setattr__(self, "subjects", frozenset(self.subjects))
        if not self.clip_bound > 0:
            raise ParameterError("clip_bound must be positive")
        for e in epochs:
            if e.subject_id not in self.subjects:
                raise ParameterError(f"epoch subject {e.subject_id!r} not in dataset subjects")
        if epochs:
            ref = epochs[0]
            for e in epochs[1:]:
                if e.samples.shape != ref.samples.shape or e.sample_rate_hz != ref.sample_rate_hz:
                    raise ParameterError("all epochs must share C, N and sample rate")

    def __len__(self):
        return len(self.epochs)

    @property
    def shape(self) -> tuple:
        return self.epochs[0].samples.shape

    @property
    def sample_rate_hz(self) -> float:
        return self.epochs[0].sample_rate_hz

    def labels(self) -> np.ndarray:
        return np.array([STAGE_INDEX[e.label] for e in self.epochs], dtype=np.int64)

    def subset(self, subjects: Iterable[str], strip_labels: bool = False) -> "Dataset":
        keep = frozenset(subjects)
        epochs = [e for e in self.epochs if e.subject_id in keep]
        if strip_labels:
            epochs = [replace(e, label=None) for e in epochs]
        return Dataset(tuple(epochs), clip_bound=self.clip_bound, subjects=keep)


@dataclass(frozen=True)
class Split:
    pretext: Dataset
    training: Dataset
    test: Dataset


def generate_synthetic_dataset(
    n_subjects: int,
    epochs_per_subject: int,
    C: int = 2,
    N: int = 3000,
    fs: float = 100.0,
    seed: int = 0,
    clip_bound: float = 50.0,
    tone_amplitude: float = 0.5,
    background_std: float = 4.0,
    pink_exponent: tuple = (1.0, 2.0),
    noise_std: tuple = (0.05, 0.3),
    artifact_std: tuple = (0.5, 5.0),
    epoch_gain: tuple = (0.5, 2.0),
) -> Dataset:
    """Toy sleep recordings whose five classes differ by dominant frequency band.

    Class k carries three tones drawn inside band k. Everything else is
    nuisance that varies per epoch: a 1/f^a background (a drawn from
    ``pink_exponent``), muscle-like noise above 30 Hz and weak white noise,
    each at a random level, and a log-uniform gain, on top of a per-subject
    gain and inter-channel mixing. The nuisance dominates raw sample
    statistics, so a random projection of the spectrogram probes poorly,
    while band-power ratios inside 0.5-25 Hz still separate the classes.
    """
    if n_subjects < 3:
        raise ParameterError("n_subjects must be >= 3")
    if epochs_per_subject < 1 or C < 1:
        raise ParameterError("epochs_per_subject and C must be >= 1")
    if N < MIN_SAMPLES:
        raise ParameterError(f"N must be >= {MIN_SAMPLES}")
    if fs <= 2 * STAGE_BANDS[-1][1]:
        raise ParameterError(f"fs must exceed {2 * STAGE_BANDS[-1][1]} Hz for the class bands")

    rng = np.random.default_rng(seed)
    t = np.arange(N) / fs
    freqs = np.fft.rfftfreq(N, 1 / fs)
    log_gain = np.log(epoch_gain)
    artifact_band = freqs >= 30.0
    epochs = []
    for s in range(n_subjects):
        sid = f"S{s:03d}"
        gain = rng.uniform(0.6, 1.6)
        mix = np.eye(C) + 0.3 * rng.standard_normal((C, C))
        labels = np.resize(np.arange(len(STAGES)), epochs_per_subject)
        rng.shuffle(labels)
        for k in labels:
            x = np.zeros((C, N))
            lo, hi = STAGE_BANDS[k]
            for _ in range(3):
                f = rng.uniform(lo, hi)
                amp = tone_amplitude * rng.uniform(0.6, 1.4, size=(C, 1))
                x += amp * np.cos(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi, size=(C, 1)))
            shape = np.zeros_like(freqs)
            shape[1:] = freqs[1:] ** -rng.uniform(*pink_exponent)
            spec = shape * (rng.standard_normal((C, freqs.size)) + 1j * rng.standard_normal((C, freqs.size)))
            background = np.fft.irfft(spec, n=N)
            x += background_std * background / max(background.std(), 1e-12)
            spec = artifact_band * (rng.standard_normal((C, freqs.size)) + 1j * rng.standard_normal((C, freqs.size)))
            artifact = np.fft.irfft(spec, n=N)
            white = rng.uniform(*noise_std) * rng.standard_normal((C, N))
            artifact *= rng.uniform(*artifact_std) / max(artifact.std(), 1e-12)
            x = mix @ x + white + artifact
            x *= gain * np.exp(rng.uniform(*log_gain))
            x = np.clip(x, -clip_bound, clip_bound)
            epochs.append(Epoch(x.astype(np.float32), float(fs), sid, STAGES[k]))
    return Dataset(tuple(epochs), clip_bound=clip_bound)


def _group_counts(n: int, ratios: Sequence[float]) -> list:
    raw = [r * n for r in ratios]
    counts = [int(np.floor(v)) for v in raw]
    order = sorted(range(len(raw)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    for i, r in enumerate(ratios):
        while r > 0 and counts[i] == 0:
            donor = max(range(len(counts)), key=lambda j: counts[j])
            counts[donor] -= 1
            counts[i] += 1
    return counts


def split_subjects(dataset: Dataset, ratios=(0.9, 0.05, 0.05), seed: int = 0) -> Split:
    """Assign whole subjects to pretext/training/test groups; pretext labels are dropped."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must be three nonnegative numbers summing to 1, got {ratios}")
    subjects = sorted(dataset.subjects)
    nonempty = sum(r > 0 for r in ratios)
    if len(subjects) < nonempty:
        raise SplitError(f"{len(subjects)} subjects cannot fill {nonempty} nonempty groups")
    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    c = _group_counts(len(subjects), ratios)
    groups = order[: c[0]], order[c[0] : c[0] + c[1]], order[c[0] + c[1] :]
    return Split(
        pretext=dataset.subset(groups[0], strip_labels=True),
        training=dataset.subset(groups[1]),
        test=dataset.subset(groups[2]),
    )


def clip_amplitude(epoch: Epoch, bound: float) -> Epoch:
    if not bound > 0:
        raise ParameterError("clip bound must be positive")
    x = epoch.samples
    b = np.float32(bound)
    if np.all(np.abs(x) <= b):
        return epoch
    return epoch.with_samples(np.clip(x, -b, b))


# --- file formats -----------------------------------------------------------


def save_epoch_file(epoch: Epoch, path) -> Path:
    """Write an epoch as EPOC1 binary, or CSV when the suffix is .csv."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["channel"] + [f"t{i}" for i in range(epoch.n_samples)])
            for c, row in enumerate(epoch.samples):
                w.writerow([c] + [repr(float(v)) for v in row])
        return path
    sid = epoch.subject_id.encode("utf-8")
    if len(sid) > 32:
        raise ParameterError(f"subject id longer than 32 bytes: {epoch.subject_id!r}")
    label = UNLABELED if epoch.label is None else STAGE_INDEX[epoch.label]
    header = _HEADER.pack(
        MAGIC, VERSION, epoch.n_channels, epoch.n_samples, epoch.sample_rate_hz, label, sid
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(epoch.samples.astype("<f4").tobytes(order="C"))
    return path


def _load_binary(path: Path) -> Epoch:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header at byte offset {len(raw)}")
    magic, version, C, N, fs, label, sid = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic at byte offset 0")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte offset 6")
    if label != UNLABELED and label >= len(STAGES):
        raise FormatError(f"{path}: invalid label {label} at byte offset 20")
    need = _HEADER.size + 4 * C * N
    if len(raw) < need:
        raise FormatError(f"{path}: truncated payload at byte offset {len(raw)}, expected {need} bytes")
    x = np.frombuffer(raw, dtype="<f4", count=C * N, offset=_HEADER.size).reshape(C, N)
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise FormatError(f"{path}: non-finite sample at byte offset {_HEADER.size + 4 * int(bad[0])}")
    try:
        return Epoch(
            x.astype(np.float32),
            float(fs),
            sid.rstrip(b"\0").decode("utf-8"),
            None if label == UNLABELED else STAGES[label],
        )
    except ParameterError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _load_csv(path: Path, sample_rate_hz, subject_id, label) -> Epoch:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "channel":
            raise FormatError(f"{path}: row 1: expected header starting with 'channel'")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}: row {lineno}: {exc}") from exc
            if not np.all(np.isfinite(vals)):
                raise FormatError(f"{path}: row {lineno}: non-finite sample")
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no channel rows")
    try:
        return Epoch(np.vstack(rows), sample_rate_hz, subject_id or path.stem, label)
    except ParameterError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def load_epoch_file(path, sample_rate_hz: float = 100.0, subject_id=None, label=None) -> Epoch:
    """Read an EPOC1 or CSV epoch.

    CSV files carry samples only, so ``sample_rate_hz``, ``subject_id``
    (default: file stem) and ``label`` are supplied by the caller.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    if path.suffix.lower() == ".csv":
        return _load_csv(path, sample_rate_hz, subject_id, label)
    return _load_binary(path)
