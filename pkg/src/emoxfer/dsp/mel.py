"""Mel-spectrogram extraction: 80 log-amplitude bands, 50 ms / 12.5 ms framing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal.windows import hann

from ..config import AudioConfig
from ..errors import DataError, ShortInputError
from .audio import AudioClip


@dataclass
class MelSpectrogram:
    """Log-amplitude mel-spectrogram, rank-2 [frames x bands]."""

    values: np.ndarray
    frame_shift_ms: float = 12.5
    frame_length_ms: float = 50.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"mel must be rank-2, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("mel contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def frame_count(n_samples: int, frame_length: int, frame_shift: int) -> int:
    """Number of full frames with no center padding."""
    if n_samples < frame_length:
        raise ShortInputError(
            f"need at least {frame_length} samples for one frame, got {n_samples}"
        )
    return (n_samples - frame_length) // frame_shift + 1


def frame_signal(samples: np.ndarray, frame_length: int, frame_shift: int) -> np.ndarray:
    """Slice a signal into overlapping frames, shape [n_frames, frame_length]."""
    n_frames = frame_count(len(samples), frame_length, frame_shift)
    idx = np.arange(frame_length)[None, :] + frame_shift * np.arange(n_frames)[:, None]
    return samples[idx]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters on the mel scale from 0 Hz to Nyquist, [n_mels x bins]."""
    n_bins = n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * sample_rate / n_fft
    edges_hz = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        fb[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def mel_center_frequencies(n_mels: int, sample_rate: int) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    edges_hz = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    return edges_hz[1:-1]


def stft_magnitude(samples: np.ndarray, config: AudioConfig) -> np.ndarray:
    """Hann-windowed magnitude STFT with no center padding, [frames x bins]."""
    frames = frame_signal(samples, config.frame_length, config.frame_shift)
    window = hann(config.frame_length, sym=False)
    return np.abs(np.fft.rfft(frames * window, n=config.n_fft, axis=1))


def compute_mel(clip: AudioClip, config: AudioConfig | None = None) -> MelSpectrogram:
    """Log mel-spectrogram of a clip.

    Frame count is floor((n_samples - frame_length) / frame_shift) + 1; the
    magnitude spectrum is pooled by triangular mel filters and log-compressed
    with an amplitude floor, so silence maps to log(mel_floor) everywhere.
    """
    config = config or AudioConfig()
    if clip.sample_rate != config.sample_rate:
        raise DataError(
            f"clip rate {clip.sample_rate} != configured rate {config.sample_rate}"
        )
    if not np.all(np.isfinite(clip.samples)):
        raise DataError("audio contains non-finite samples")
    magnitude = stft_magnitude(clip.samples, config)
    fb = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate)
    mel = magnitude @ fb.T
    values = np.log(np.maximum(mel, config.mel_floor))
    return MelSpectrogram(
        values=values,
        frame_shift_ms=config.frame_shift_ms,
        frame_length_ms=config.frame_length_ms,
    )
