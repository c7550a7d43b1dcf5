"""Griffin-Lim preview: rough audio from a log-mel, for listening checks only."""

from __future__ import annotations

import numpy as np
from scipy.signal.windows import hann

from .config import AudioConfig
from .dsp.audio import AudioClip
from .dsp.mel import mel_filterbank


def _stft(samples, config):
    n_frames = (len(samples) - config.frame_length) // config.frame_shift + 1
    idx = (
        np.arange(config.frame_length)[None, :]
        + config.frame_shift * np.arange(n_frames)[:, None]
    )
    window = hann(config.frame_length, sym=False)
    return np.fft.rfft(samples[idx] * window, n=config.n_fft, axis=1)


def _istft(spectrum, config):
    window = hann(config.frame_length, sym=False)
    frames = np.fft.irfft(spectrum, n=config.n_fft, axis=1)[:, : config.frame_length]
    n_frames = frames.shape[0]
    length = (n_frames - 1) * config.frame_shift + config.frame_length
    out = np.zeros(length)
    weight = np.zeros(length)
    for t in range(n_frames):
        sl = slice(t * config.frame_shift, t * config.frame_shift + config.frame_length)
        out[sl] += frames[t] * window
        weight[sl] += window**2
    return out / np.maximum(weight, 1e-8)


def griffin_lim_preview(mel_values, config: AudioConfig | None = None, iterations: int = 60) -> AudioClip:
    """Invert a log-mel [T x n_mels] to a waveform by phase re-estimation.

    The mel is mapped back to a linear magnitude spectrogram with the
    filterbank pseudo-inverse, then Griffin-Lim alternates between the
    magnitude constraint and a consistent phase. Output length is
    (T - 1) * frame_shift + frame_length samples.
    """
    config = config or AudioConfig()
    mel_amp = np.exp(np.asarray(mel_values, dtype=np.float64))
    # cells at the log floor carry no signal; keep them out of the inversion
    mel_amp = np.where(mel_amp <= config.mel_floor * (1.0 + 1e-9), 0.0, mel_amp)
    fb = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate)
    magnitude = np.clip(mel_amp @ np.linalg.pinv(fb).T, 0.0, None)  # [T, bins]

    spectrum = magnitude.astype(np.complex128)
    samples = _istft(spectrum, config)
    for _ in range(iterations):
        analysis = _stft(samples, config)
        phase = analysis / np.maximum(np.abs(analysis), 1e-10)
        samples = _istft(magnitude * phase, config)
    peak = np.abs(samples).max()
    if peak > 1.0:
        samples = samples / peak
    return AudioClip(samples=samples, sample_rate=config.sample_rate)
