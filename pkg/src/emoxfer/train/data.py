"""Preprocessed corpus access and batch assembly.

A preprocessed directory holds per-utterance mel (.mat) and prosody-target
(.mat) matrices, reconciled alignments, the manifest copy, the speaker list,
speaker prosody statistics, and the corpus-global mel mean/std.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, replace

import numpy as np
import torch
import yaml

from ..dsp.manifest import load_alignment, load_manifest
from ..dsp.prosody import load_speaker_stats
from ..errors import DataError
from ..matio import load_matrix


@dataclass
class Utterance:
    utt_id: str
    speaker_id: str
    speaker_idx: int
    label: int              # -1 when unlabeled
    phoneme_ids: np.ndarray
    durations: np.ndarray
    mel: np.ndarray         # [T, n_mels], un-normalized
    prosody: np.ndarray     # [P, 3], speaker-normalized


class PreparedDataset:
    """Loads a preprocessed corpus directory fully into memory."""

    def __init__(self, root):
        self.root = str(root)
        records = load_manifest(os.path.join(root, "manifest.tsv"))
        with open(os.path.join(root, "speakers.txt")) as fh:
            self.speakers = [line.strip() for line in fh if line.strip()]
        self.speaker_index = {sid: i for i, sid in enumerate(self.speakers)}
        self.speaker_stats = load_speaker_stats(os.path.join(root, "speaker_stats.txt"))
        with open(os.path.join(root, "mel_stats.txt")) as fh:
            mean, std = (float(x) for x in fh.read().split())
        self.mel_stats = (mean, std)
        with open(os.path.join(root, "meta.yaml")) as fh:
            self.meta = yaml.safe_load(fh)
        self.utterances = []
        for rec in records:
            utt_id = rec.utt_id
            alignment = load_alignment(os.path.join(root, "align", utt_id + ".lab"))
            mel = load_matrix(os.path.join(root, "mel", utt_id + ".mat"))
            pros = load_matrix(os.path.join(root, "pros", utt_id + ".mat"))
            if alignment.total_frames != mel.shape[0]:
                raise DataError(f"{utt_id}: alignment/mel frame mismatch after preprocess")
            self.utterances.append(
                Utterance(
                    utt_id=utt_id,
                    speaker_id=rec.speaker_id,
                    speaker_idx=self.speaker_index[rec.speaker_id],
                    label=-1 if rec.emotion_label is None else rec.emotion_label,
                    phoneme_ids=alignment.phoneme_ids,
                    durations=alignment.durations_frames,
                    mel=mel.astype(np.float32),
                    prosody=pros.astype(np.float32),
                )
            )
        if not self.utterances:
            raise DataError(f"{root}: empty dataset")

    def __len__(self):
        return len(self.utterances)

    def __getitem__(self, i):
        return self.utterances[i]

    @property
    def vocab_size(self) -> int:
        return int(self.meta["vocab_size"])

    @property
    def n_mels(self) -> int:
        return int(self.meta["n_mels"])

    def normalized_mel(self, utt: Utterance) -> np.ndarray:
        mean, std = self.mel_stats
        return (utt.mel - mean) / std

    def by_speaker(self, speaker_id: str):
        return [u for u in self.utterances if u.speaker_id == speaker_id]

    def labeled(self):
        return [u for u in self.utterances if u.label >= 0]

    def restrict_speakers(self, keep_ids) -> "PreparedDataset":
        """View with only the given speakers; speaker indices are re-packed.

        Used for zero-shot training, where target speakers are held out of
        training entirely. Prosody statistics for all original speakers are
        kept (inference may still need them for seen-speaker synthesis).
        """
        keep = set(keep_ids)
        missing = keep - set(self.speakers)
        if missing:
            raise DataError(f"unknown speakers in restriction: {sorted(missing)}")
        view = copy.copy(self)
        view.speakers = [s for s in self.speakers if s in keep]
        view.speaker_index = {sid: i for i, sid in enumerate(view.speakers)}
        view.utterances = [
            replace(u, speaker_idx=view.speaker_index[u.speaker_id])
            for u in self.utterances
            if u.speaker_id in keep
        ]
        if not view.utterances:
            raise DataError("speaker restriction removed every utterance")
        return view


def collate(dataset: PreparedDataset, indices) -> dict:
    """Pad a list of utterances into batch tensors with explicit lengths."""
    utts = [dataset[int(i)] for i in indices]
    b = len(utts)
    p_max = max(len(u.phoneme_ids) for u in utts)
    t_max = max(u.mel.shape[0] for u in utts)
    n_mels = utts[0].mel.shape[1]

    phonemes = torch.zeros(b, p_max, dtype=torch.int64)
    durations = torch.zeros(b, p_max, dtype=torch.int64)
    prosody = torch.zeros(b, p_max, 3)
    mel = torch.zeros(b, t_max, n_mels)
    phoneme_lengths = torch.zeros(b, dtype=torch.int64)
    mel_lengths = torch.zeros(b, dtype=torch.int64)
    speakers = torch.zeros(b, dtype=torch.int64)
    labels = torch.zeros(b, dtype=torch.int64)

    for i, u in enumerate(utts):
        n_p, n_t = len(u.phoneme_ids), u.mel.shape[0]
        phonemes[i, :n_p] = torch.from_numpy(u.phoneme_ids)
        durations[i, :n_p] = torch.from_numpy(u.durations)
        prosody[i, :n_p] = torch.from_numpy(u.prosody)
        mel[i, :n_t] = torch.from_numpy(dataset.normalized_mel(u))
        phoneme_lengths[i] = n_p
        mel_lengths[i] = n_t
        speakers[i] = u.speaker_idx
        labels[i] = u.label
    return {
        "mel": mel,
        "mel_lengths": mel_lengths,
        "phonemes": phonemes,
        "phoneme_lengths": phoneme_lengths,
        "durations": durations,
        "prosody": prosody,
        "speakers": speakers,
        "labels": labels,
    }
