"""Per-frame RMS energy in dB."""

from __future__ import annotations

import numpy as np

from ..config import AudioConfig
from ..errors import DataError
from .audio import AudioClip
from .mel import frame_signal


def extract_energy(clip: AudioClip, config: AudioConfig | None = None) -> np.ndarray:
    """Frame RMS energy in dB, floored at config.energy_floor_db.

    Framing matches the mel frontend, so energy, F0 and mel frames align
    one-to-one. A full-scale square wave measures exactly 0 dB.
    """
    config = config or AudioConfig()
    if clip.sample_rate != config.sample_rate:
        raise DataError(
            f"clip rate {clip.sample_rate} != configured rate {config.sample_rate}"
        )
    frames = frame_signal(clip.samples, config.frame_length, config.frame_shift)
    rms = np.sqrt((frames**2).mean(axis=1))
    rms_floor = 10.0 ** (config.energy_floor_db / 20.0)
    return 20.0 * np.log10(np.maximum(rms, rms_floor))
