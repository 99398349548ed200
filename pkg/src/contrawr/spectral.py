"""STFT amplitude/phase features fed to the encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError
from .signals import Epoch


@dataclass(frozen=True)
class STFTConfig:
    window: int = 256
    hop: int = 64
    log_amplitude: bool = False


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    values: np.ndarray  # [2C, F, T]: amplitudes then phases
    window: int
    hop: int


def hann(window: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(window)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / window)


def n_frames(n_samples: int, window: int, hop: int) -> int:
    return (n_samples - window) // hop + 1


def feature_shape(n_channels: int, n_samples: int, window: int, hop: int) -> tuple:
    return (2 * n_channels, window // 2 + 1, n_frames(n_samples, window, hop))


def _check(n_samples, window, hop):
    if window < 2 or window % 2:
        raise ParameterError(f"window must be even and >= 2, got {window}")
    if hop < 1:
        raise ParameterError(f"hop must be >= 1, got {hop}")
    if n_samples < window:
        raise ParameterError(f"signal length {n_samples} shorter than window {window}")


def stft(signal: np.ndarray, window: int = 256, hop: int = 64) -> np.ndarray:
    """One-sided STFT of the trailing axis without padding.

    A 1-D input gives an [F, T] complex matrix; leading axes are carried
    through, so a [C, N] input gives [C, F, T].
    """
    x = np.asarray(signal, dtype=np.float64)
    _check(x.shape[-1], window, hop)
    frames = sliding_window_view(x, window, axis=-1)[..., ::hop, :]
    spec = np.fft.rfft(frames * hann(window), axis=-1)
    return np.swapaxes(spec, -1, -2)


def spectrogram_features(samples: np.ndarray, window: int = 256, hop: int = 64, log_amplitude: bool = False) -> np.ndarray:
    """Amplitude and phase channels for a [..., C, N] array, returned as [..., 2C, F, T]."""
    spec = stft(samples, window, hop)
    amp = np.abs(spec)
    phase = np.where(amp == 0, 0.0, np.angle(spec))
    if log_amplitude:
        amp = np.log1p(amp)
    return np.concatenate([amp, phase], axis=-3)


def epoch_to_features(epoch: Epoch, window: int = 256, hop: int = 64, log_amplitude: bool = False) -> FeatureTensor:
    values = spectrogram_features(epoch.samples, window, hop, log_amplitude)
    return FeatureTensor(values, window, hop)


def batch_features(epochs, cfg: STFTConfig = STFTConfig(), dtype=np.float32) -> np.ndarray:
    """Stack features for a list of epochs into a [B, 2C, F, T] array."""
    samples = np.stack([e.samples for e in epochs])
    return spectrogram_features(samples, cfg.window, cfg.hop, cfg.log_amplitude).astype(dtype)
