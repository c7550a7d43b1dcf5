"""Phoneme-level prosody features and per-speaker mean-variance normalization.

The three prosodic dimensions are, in order: log-F0, energy (dB),
log-duration (log frames). All three are z-scored against the statistics of
the utterance's own speaker, computed over that speaker's training set only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AlignmentError, DataError, MissingStatsError

N_PROSODY_DIMS = 3
_STD_EPS = 1e-6


@dataclass
class SpeakerStats:
    """Per-speaker mean and std for each prosodic dimension."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(N_PROSODY_DIMS)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(N_PROSODY_DIMS)
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.std))):
            raise DataError("speaker stats contain non-finite values")
        self.std = np.maximum(self.std, _STD_EPS)


@dataclass
class ProsodyTargets:
    """Normalized per-phoneme prosody, rank-2 [n_phonemes x 3]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != N_PROSODY_DIMS:
            raise DataError(f"prosody targets must be [P x 3], got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("prosody targets contain non-finite values")


def phoneme_average(frame_values, alignment, voiced_mask=None) -> np.ndarray:
    """Mean of a frame-level track over each phoneme's interval.

    With a voiced mask, only voiced frames contribute; an interval with no
    voiced frame falls back to the utterance-level voiced mean (or the plain
    mean when nothing is voiced at all).
    """
    frame_values = np.asarray(frame_values, dtype=np.float64)
    durations = np.asarray(getattr(alignment, "durations_frames", alignment), dtype=np.int64)
    if durations.sum() != len(frame_values):
        raise AlignmentError(
            f"durations sum to {durations.sum()} but track has {len(frame_values)} frames"
        )
    if voiced_mask is None:
        voiced = np.ones(len(frame_values), dtype=bool)
    else:
        voiced = np.asarray(voiced_mask, dtype=bool)
        if len(voiced) != len(frame_values):
            raise AlignmentError("voiced mask length does not match frame count")
    if voiced.any():
        fallback = frame_values[voiced].mean()
    else:
        fallback = frame_values.mean() if len(frame_values) else 0.0

    out = np.empty(len(durations))
    start = 0
    for i, dur in enumerate(durations):
        seg = slice(start, start + dur)
        seg_voiced = voiced[seg]
        if seg_voiced.any():
            out[i] = frame_values[seg][seg_voiced].mean()
        else:
            out[i] = fallback
        start += dur
    return out


def accumulate_speaker_stats(utterance_features) -> SpeakerStats:
    """Single-pass mean/std over a speaker's per-phoneme feature matrices."""
    stacked = np.concatenate([np.asarray(f, dtype=np.float64) for f in utterance_features])
    if stacked.ndim != 2 or stacked.shape[1] != N_PROSODY_DIMS:
        raise DataError(f"expected [P x 3] feature blocks, got {stacked.shape}")
    return SpeakerStats(mean=stacked.mean(axis=0), std=stacked.std(axis=0))


def normalize_per_speaker(phoneme_feats, stats: SpeakerStats) -> ProsodyTargets:
    """z-score each prosodic dimension with the speaker's own statistics."""
    feats = np.asarray(phoneme_feats, dtype=np.float64)
    return ProsodyTargets(values=(feats - stats.mean) / stats.std)


def denormalize(targets, stats: SpeakerStats) -> np.ndarray:
    """Inverse of normalize_per_speaker."""
    values = targets.values if isinstance(targets, ProsodyTargets) else np.asarray(targets)
    return values * stats.std + stats.mean


def save_speaker_stats(path, stats_by_speaker: dict) -> None:
    """One line per speaker: id then mean,std for each of the 3 dimensions."""
    with open(path, "w") as fh:
        for speaker_id in sorted(stats_by_speaker):
            st = stats_by_speaker[speaker_id]
            numbers = []
            for d in range(N_PROSODY_DIMS):
                numbers.extend([st.mean[d], st.std[d]])
            fh.write(speaker_id + "\t" + " ".join(repr(float(x)) for x in numbers) + "\n")


def load_speaker_stats(path) -> dict:
    stats = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                speaker_id, payload = line.split("\t")
                numbers = [float(x) for x in payload.split()]
                if len(numbers) != 2 * N_PROSODY_DIMS:
                    raise ValueError(f"expected {2 * N_PROSODY_DIMS} numbers")
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: malformed stats line ({exc})") from exc
            stats[speaker_id] = SpeakerStats(mean=numbers[0::2], std=numbers[1::2])
    return stats


def stats_for(stats_by_speaker: dict, speaker_id: str) -> SpeakerStats:
    try:
        return stats_by_speaker[speaker_id]
    except KeyError:
        raise MissingStatsError(f"no prosody statistics for speaker {speaker_id!r}") from None
