"""Stochastic EEG augmentations and the uniform random selector used for pretext views."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import ParameterError
from .signals import Epoch, clip_amplitude

METHODS = ("bandpass", "noising", "flipping", "rotation")
NOISE_MODES = ("high", "low", "both")


@dataclass(frozen=True)
class AugmentPolicy:
    enabled: tuple = METHODS
    bandpass_bands: tuple = ((1.0, 5.0), (30.0, 49.0))
    noise_degree: float = 0.05
    flip_pairs: tuple = ((0, 1),)
    clip_bound: float = 50.0

    def __post_init__(self):
        enabled = tuple(self.enabled)
        bands = tuple((float(lo), float(hi)) for lo, hi in self.bandpass_bands)
        pairs = tuple((int(i), int(j)) for i, j in self.flip_pairs)
        object.__setattr__(self, "enabled", enabled)
        object.__setattr__(self, "bandpass_bands", bands)
        object.__setattr__(self, "flip_pairs", pairs)
        if not enabled:
            raise ParameterError("at least one augmentation must be enabled")
        unknown = set(enabled) - set(METHODS)
        if unknown:
            raise ParameterError(f"unknown augmentations: {sorted(unknown)}")
        if len(set(enabled)) != len(enabled):
            raise ParameterError("duplicate augmentation in enabled list")
        if set(enabled) == {"flipping"}:
            raise ParameterError("flipping cannot be the only enabled augmentation")
        if "bandpass" in enabled and not bands:
            raise ParameterError("bandpass enabled but no bands configured")
        for lo, hi in bands:
            if not 0 <= lo < hi:
                raise ParameterError(f"invalid band ({lo}, {hi})")
        if not 0 <= self.noise_degree <= 1:
            raise ParameterError("noise_degree must lie in [0, 1]")
        _check_pairs(pairs, None)
        if not self.clip_bound > 0:
            raise ParameterError("clip_bound must be positive")

    def validate_for(self, n_channels: int, fs: float) -> None:
        """Check band edges and flip indices against a concrete signal shape."""
        for lo, hi in self.bandpass_bands:
            if hi >= fs / 2:
                raise ParameterError(f"band ({lo}, {hi}) exceeds Nyquist {fs / 2}")
        _check_pairs(self.flip_pairs, n_channels)


def _check_pairs(pairs, n_channels):
    seen = set()
    for i, j in pairs:
        if i == j or i in seen or j in seen:
            raise ParameterError(f"flip pair ({i}, {j}) collides with another index")
        if n_channels is not None and not (0 <= i < n_channels and 0 <= j < n_channels):
            raise ParameterError(f"flip pair ({i}, {j}) out of range for {n_channels} channels")
        if i < 0 or j < 0:
            raise ParameterError(f"negative channel index in pair ({i}, {j})")
        seen.update((i, j))


def butterworth_sections(low_hz: float, high_hz: float, fs: float):
    """First-order Butterworth high-pass at ``low_hz`` cascaded with a low-pass at ``high_hz``.

    Each section is the bilinear transform of 1/(s + wc) or s/(s + wc) with the
    cutoff prewarped. Returns the combined (b, a). ``low_hz == 0`` drops the
    high-pass section.
    """
    if not 0 <= low_hz < high_hz < fs / 2:
        raise ParameterError(f"need 0 <= low < high < fs/2, got ({low_hz}, {high_hz}) at fs={fs}")
    k = math.tan(math.pi * high_hz / fs)
    pole = (k - 1) / (k + 1)
    b = np.array([k, k]) / (1 + k)
    a = np.array([1.0, pole])
    if low_hz > 0:
        k = math.tan(math.pi * low_hz / fs)
        pole = (k - 1) / (k + 1)
        b = np.convolve(b, np.array([1.0, -1.0]) / (1 + k))
        a = np.convolve(a, np.array([1.0, pole]))
    return b, a


def bandpass(epoch: Epoch, low_hz: float, high_hz: float) -> Epoch:
    b, a = butterworth_sections(low_hz, high_hz, epoch.sample_rate_hz)
    y = lfilter(b, a, epoch.samples.astype(np.float64), axis=-1)
    return epoch.with_samples(y)


def amplitude_range(samples: np.ndarray) -> np.ndarray:
    """Per-channel half peak-to-peak, shape (C, 1)."""
    x = samples.astype(np.float64)
    return (x.max(axis=1, keepdims=True) - x.min(axis=1, keepdims=True)) / 2


def noise_sequence(shape, D: float, A: np.ndarray, mode: str, rng: np.random.Generator) -> np.ndarray:
    C, N = shape
    noise = np.zeros((C, N))
    if mode in ("high", "both"):
        noise += D * A * rng.uniform(-1.0, 1.0, size=(C, N))
    if mode in ("low", "both"):
        knots = max(N // 100, 2)
        coarse = D * A * rng.uniform(-1.0, 1.0, size=(C, knots))
        src = np.linspace(0.0, N - 1.0, knots)
        dst = np.arange(N, dtype=np.float64)
        noise += np.vstack([np.interp(dst, src, row) for row in coarse])
    return noise


def add_noise(epoch: Epoch, D: float, mode=None, rng=None, clip_bound=None) -> Epoch:
    """Add uniform noise scaled by ``D`` times the per-channel amplitude range.

    ``mode`` is one of high/low/both, drawn uniformly when None. The low
    mode interpolates N/100 random knots up to length N.
    """
    if D < 0:
        raise ParameterError("noise degree must be >= 0")
    rng = np.random.default_rng() if rng is None else rng
    if mode is None:
        mode = NOISE_MODES[rng.integers(len(NOISE_MODES))]
    if mode not in NOISE_MODES:
        raise ParameterError(f"unknown noise mode {mode!r}")
    if D == 0:
        return epoch
    x = epoch.samples.astype(np.float64)
    y = x + noise_sequence(x.shape, D, amplitude_range(x), mode, rng)
    out = epoch.with_samples(y)
    return out if clip_bound is None else clip_amplitude(out, clip_bound)


def flip_channels(epoch: Epoch, pairs) -> Epoch:
    pairs = [(int(i), int(j)) for i, j in pairs]
    _check_pairs(pairs, epoch.n_channels)
    if not pairs:
        return epoch
    order = np.arange(epoch.n_channels)
    for i, j in pairs:
        order[i], order[j] = j, i
    return epoch.with_samples(epoch.samples[order])


def rotate(epoch: Epoch, split_index=None, rng=None) -> Epoch:
    """Cut the epoch at ``split_index`` and swap the two pieces (cyclic shift)."""
    N = epoch.n_samples
    if split_index is None:
        rng = np.random.default_rng() if rng is None else rng
        split_index = int(rng.integers(N))
    if not 0 <= split_index <= N:
        raise ParameterError(f"split index {split_index} outside [0, {N}]")
    if split_index in (0, N):
        return epoch
    return epoch.with_samples(np.roll(epoch.samples, -split_index, axis=1))


def choose_augmentation(policy: AugmentPolicy, rng: np.random.Generator) -> str:
    return policy.enabled[rng.integers(len(policy.enabled))]


def _apply(method: str, epoch: Epoch, policy: AugmentPolicy, rng) -> Epoch:
    if method == "bandpass":
        lo, hi = policy.bandpass_bands[rng.integers(len(policy.bandpass_bands))]
        return bandpass(epoch, lo, hi)
    if method == "noising":
        return add_noise(epoch, policy.noise_degree, None, rng)
    if method == "flipping":
        return flip_channels(epoch, policy.flip_pairs)
    return rotate(epoch, None, rng)


def random_augment(epoch: Epoch, policy: AugmentPolicy, rng: np.random.Generator) -> Epoch:
    """Apply one enabled augmentation chosen uniformly, then clip.

    A flipping draw is paired with one other enabled method, since a channel
    swap alone leaves the spectral content untouched.
    """
    method = choose_augmentation(policy, rng)
    out = _apply(method, epoch, policy, rng)
    if method == "flipping":
        others = [m for m in policy.enabled if m != "flipping"]
        out = _apply(others[rng.integers(len(others))], out, policy, rng)
    return clip_amplitude(out, policy.clip_bound)
