"""F0 tracking by normalized autocorrelation with parabolic peak refinement."""

from __future__ import annotations

import numpy as np

from ..config import AudioConfig
from ..errors import DataError
from .audio import AudioClip
from .mel import frame_signal

# Candidate peaks within this fraction of the per-frame maximum compete for
# the smallest lag, which suppresses period-multiple (octave-down) picks.
_PEAK_MARGIN = 0.85
_SILENCE_RMS = 1e-6


def extract_f0(clip: AudioClip, config: AudioConfig | None = None) -> np.ndarray:
    """Per-frame F0 in Hz; 0 marks unvoiced frames.

    Uses the same framing as the mel frontend. Each frame is mean-removed,
    its normalized autocorrelation searched over the configured pitch band,
    and frames whose peak falls below the voicing threshold are zeroed.
    """
    config = config or AudioConfig()
    if clip.sample_rate != config.sample_rate:
        raise DataError(
            f"clip rate {clip.sample_rate} != configured rate {config.sample_rate}"
        )
    frames = frame_signal(clip.samples, config.frame_length, config.frame_shift)
    frames = frames - frames.mean(axis=1, keepdims=True)
    n_frames, frame_length = frames.shape

    lag_min = int(np.ceil(config.sample_rate / config.f0_max_hz))
    lag_max = int(np.floor(config.sample_rate / config.f0_min_hz))
    lag_max = min(lag_max, frame_length - 2)
    if lag_min + 1 >= lag_max:
        raise DataError("frame too short for the configured pitch search band")

    # Raw autocorrelation of every frame at once via FFT.
    n_fft = 1 << int(np.ceil(np.log2(2 * frame_length)))
    spectrum = np.fft.rfft(frames, n=n_fft, axis=1)
    autocorr = np.fft.irfft(np.abs(spectrum) ** 2, n=n_fft, axis=1)[:, :frame_length]

    # Normalization: r[k] / sqrt(energy(x[0:L-k]) * energy(x[k:L])).
    prefix = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames**2, axis=1)], axis=1)
    head_energy = prefix[:, ::-1][:, :frame_length]       # sum over x[0:L-k]^2
    tail_energy = prefix[:, -1:] - prefix[:, :frame_length]  # sum over x[k:L]^2
    denom = np.sqrt(np.maximum(head_energy * tail_energy, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(denom > 0, autocorr / denom, 0.0)

    f0 = np.zeros(n_frames)
    rms = np.sqrt((frames**2).mean(axis=1))
    band = norm[:, lag_min : lag_max + 1]
    for i in range(n_frames):
        if rms[i] < _SILENCE_RMS:
            continue
        row = band[i]
        peak = row.max()
        if peak < config.voicing_threshold:
            continue
        # Local maxima competitive with the global peak; favor the smallest
        # lag among them to avoid locking onto a period multiple.
        is_max = np.zeros(len(row), dtype=bool)
        is_max[1:-1] = (row[1:-1] >= row[:-2]) & (row[1:-1] >= row[2:])
        candidates = np.flatnonzero(is_max & (row >= _PEAK_MARGIN * peak))
        if len(candidates) == 0:
            candidates = np.array([int(np.argmax(row))])
        lag = lag_min + int(candidates[0])
        lag_refined = lag + _parabolic_offset(norm[i], lag)
        f0[i] = config.sample_rate / lag_refined
    return f0


def _parabolic_offset(row: np.ndarray, lag: int) -> float:
    """Sub-sample peak offset from a 3-point parabolic fit, clamped to +-0.5."""
    if lag <= 0 or lag >= len(row) - 1:
        return 0.0
    a, b, c = row[lag - 1], row[lag], row[lag + 1]
    denom = a - 2.0 * b + c
    if abs(denom) < 1e-12:
        return 0.0
    return float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))


def interpolate_unvoiced(values: np.ndarray, voiced: np.ndarray):
    """Fill interior unvoiced gaps by linear interpolation between voiced anchors.

    Returns (filled_values, usable_mask): gaps with a voiced frame on both
    sides are interpolated and marked usable; leading/trailing unvoiced runs
    are left as-is and stay unusable.
    """
    values = np.asarray(values, dtype=np.float64).copy()
    voiced = np.asarray(voiced, dtype=bool)
    usable = voiced.copy()
    idx = np.flatnonzero(voiced)
    if len(idx) < 2:
        return values, usable
    first, last = idx[0], idx[-1]
    interior = np.arange(first, last + 1)
    gap = interior[~voiced[first : last + 1]]
    if len(gap):
        values[gap] = np.interp(gap, idx, values[idx])
        usable[gap] = True
    return values, usable
