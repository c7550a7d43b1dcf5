"""Waveform-to-feature frontend: mel-spectrograms and phoneme-level prosody."""

from .audio import AudioClip, load_wav, save_wav
from .mel import MelSpectrogram, compute_mel, mel_filterbank, frame_count, frame_signal
from .pitch import extract_f0, interpolate_unvoiced
from .energy import extract_energy
from .prosody import (
    ProsodyTargets,
    SpeakerStats,
    accumulate_speaker_stats,
    denormalize,
    load_speaker_stats,
    normalize_per_speaker,
    phoneme_average,
    save_speaker_stats,
)
from .manifest import (
    PhonemeAlignment,
    UtteranceRecord,
    load_alignment,
    load_manifest,
    reconcile_alignment,
)

__all__ = [
    "AudioClip",
    "MelSpectrogram",
    "PhonemeAlignment",
    "ProsodyTargets",
    "SpeakerStats",
    "UtteranceRecord",
    "accumulate_speaker_stats",
    "compute_mel",
    "denormalize",
    "extract_energy",
    "extract_f0",
    "frame_count",
    "frame_signal",
    "interpolate_unvoiced",
    "load_alignment",
    "load_manifest",
    "load_speaker_stats",
    "load_wav",
    "mel_filterbank",
    "normalize_per_speaker",
    "phoneme_average",
    "reconcile_alignment",
    "save_speaker_stats",
    "save_wav",
]
