"""Manifest and alignment file parsing.

Manifest: one utterance per line, tab-separated:
    audio_path<TAB>speaker_id<TAB>phoneme_ids (space-separated)<TAB>emotion_label_or_-

Alignment: one phoneme per line: `phoneme_id<SPACE>duration_frames`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..errors import AlignmentError, DataError

# Rounding residue between summed durations and the mel frame count that is
# absorbed into the final phoneme; anything larger is a real inconsistency.
RECONCILE_TOLERANCE = 2


@dataclass
class PhonemeAlignment:
    phoneme_ids: np.ndarray
    durations_frames: np.ndarray

    def __post_init__(self):
        self.phoneme_ids = np.asarray(self.phoneme_ids, dtype=np.int64)
        self.durations_frames = np.asarray(self.durations_frames, dtype=np.int64)
        if self.phoneme_ids.shape != self.durations_frames.shape:
            raise AlignmentError("phoneme/duration length mismatch")
        if len(self.phoneme_ids) == 0:
            raise AlignmentError("empty alignment")
        if np.any(self.durations_frames < 1):
            raise AlignmentError("durations must be >= 1 frame")

    @property
    def total_frames(self) -> int:
        return int(self.durations_frames.sum())


@dataclass
class UtteranceRecord:
    audio_path: str
    speaker_id: str
    phoneme_ids: list
    emotion_label: int | None

    @property
    def utt_id(self) -> str:
        return os.path.splitext(os.path.basename(self.audio_path))[0]


def load_alignment(path, vocab_size: int | None = None) -> PhonemeAlignment:
    ids, durations = [], []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"{path}:{line_no}: expected 'phoneme_id duration'")
            try:
                pid, dur = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}:{line_no}: non-integer field") from None
            if pid < 0 or (vocab_size is not None and pid >= vocab_size):
                raise DataError(f"{path}:{line_no}: unknown phoneme symbol {pid}")
            if dur < 1:
                raise DataError(f"{path}:{line_no}: non-positive duration {dur}")
            ids.append(pid)
            durations.append(dur)
    if not ids:
        raise DataError(f"{path}: empty alignment file")
    return PhonemeAlignment(phoneme_ids=ids, durations_frames=durations)


def reconcile_alignment(alignment: PhonemeAlignment, n_frames: int) -> PhonemeAlignment:
    """Absorb small boundary-rounding residue into the final phoneme.

    |residue| <= RECONCILE_TOLERANCE frames is added to the last duration
    (which must stay >= 1); a larger mismatch raises AlignmentError.
    """
    delta = n_frames - alignment.total_frames
    if delta == 0:
        return alignment
    if abs(delta) > RECONCILE_TOLERANCE:
        raise AlignmentError(
            f"durations sum to {alignment.total_frames} but mel has {n_frames} frames "
            f"(residue {delta} exceeds +-{RECONCILE_TOLERANCE})"
        )
    durations = alignment.durations_frames.copy()
    if durations[-1] + delta < 1:
        raise AlignmentError("reconciliation would drop the final phoneme below 1 frame")
    durations[-1] += delta
    return PhonemeAlignment(phoneme_ids=alignment.phoneme_ids, durations_frames=durations)


def load_manifest(path) -> list:
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{line_no}: expected 4 tab-separated fields")
            audio_path, speaker_id, phoneme_field, label_field = parts
            try:
                phoneme_ids = [int(tok) for tok in phoneme_field.split()]
            except ValueError:
                raise DataError(f"{path}:{line_no}: non-integer phoneme id") from None
            if not phoneme_ids or any(p < 0 for p in phoneme_ids):
                raise DataError(f"{path}:{line_no}: bad phoneme sequence")
            if label_field == "-":
                label = None
            else:
                try:
                    label = int(label_field)
                except ValueError:
                    raise DataError(f"{path}:{line_no}: bad emotion label {label_field!r}") from None
                if label < 0:
                    raise DataError(f"{path}:{line_no}: negative emotion label")
            records.append(
                UtteranceRecord(
                    audio_path=audio_path,
                    speaker_id=speaker_id,
                    phoneme_ids=phoneme_ids,
                    emotion_label=label,
                )
            )
    return records


def save_manifest(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            label = "-" if rec.emotion_label is None else str(rec.emotion_label)
            fh.write(
                "\t".join(
                    [rec.audio_path, rec.speaker_id, " ".join(str(p) for p in rec.phoneme_ids), label]
                )
                + "\n"
            )


def save_alignment(path, alignment: PhonemeAlignment) -> None:
    with open(path, "w") as fh:
        for pid, dur in zip(alignment.phoneme_ids, alignment.durations_frames):
            fh.write(f"{pid} {dur}\n")
