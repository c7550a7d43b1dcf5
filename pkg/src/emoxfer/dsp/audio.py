"""Audio clips: loading, resampling to the working rate, 16-bit PCM output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from ..errors import DataError

WORKING_RATE = 16000  # all analysis runs at 16 kHz; inputs are resampled on load


@dataclass
class AudioClip:
    """A mono waveform with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError(f"expected mono audio, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("audio contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def load_wav(path, target_rate: int = WORKING_RATE) -> AudioClip:
    """Load a WAV file as mono float64 in [-1, 1], resampled to target_rate.

    Peaks above full scale (possible after resampling) are normalized away.
    """
    rate, data = wavfile.read(path)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if np.issubdtype(data.dtype, np.integer):
        scale = float(max(abs(np.iinfo(data.dtype).min), np.iinfo(data.dtype).max))
        samples = data.astype(np.float64) / scale
    else:
        samples = data.astype(np.float64)
    if not np.all(np.isfinite(samples)):
        raise DataError(f"{path}: non-finite samples")
    if rate != target_rate:
        g = np.gcd(rate, target_rate)
        samples = resample_poly(samples, target_rate // g, rate // g)
    peak = np.max(np.abs(samples)) if len(samples) else 0.0
    if peak > 1.0:
        samples = samples / peak
    return AudioClip(samples=samples, sample_rate=target_rate)


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM mono."""
    samples = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.round(samples * 32767.0).astype("<i2")
    wavfile.write(path, clip.sample_rate, pcm)
