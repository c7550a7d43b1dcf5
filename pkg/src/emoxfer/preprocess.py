"""Corpus preprocessing: wav + alignment -> mel, normalized prosody targets, stats."""

from __future__ import annotations

import logging
import os

import numpy as np
import yaml

from .config import AudioConfig
from .dsp.audio import load_wav
from .dsp.energy import extract_energy
from .dsp.manifest import load_alignment, load_manifest, reconcile_alignment, save_alignment, save_manifest
from .dsp.mel import compute_mel
from .dsp.pitch import extract_f0, interpolate_unvoiced
from .dsp.prosody import (
    accumulate_speaker_stats,
    normalize_per_speaker,
    phoneme_average,
    save_speaker_stats,
)
from .errors import DataError
from .matio import save_matrix

log = logging.getLogger(__name__)


def utterance_features(clip, alignment, config: AudioConfig):
    """Mel plus per-phoneme (log-F0, energy, log-duration) for one utterance."""
    mel = compute_mel(clip, config)
    alignment = reconcile_alignment(alignment, mel.n_frames)
    f0 = extract_f0(clip, config)
    energy = extract_energy(clip, config)
    voiced = f0 > 0
    if not voiced.any():
        raise DataError("utterance has no voiced frames; cannot build log-F0 targets")
    logf0 = np.where(voiced, np.log(np.maximum(f0, 1e-6)), 0.0)
    logf0, usable = interpolate_unvoiced(logf0, voiced)
    feats = np.stack(
        [
            phoneme_average(logf0, alignment, voiced_mask=usable),
            phoneme_average(energy, alignment),
            np.log(alignment.durations_frames.astype(np.float64)),
        ],
        axis=1,
    )
    return mel, alignment, feats


def preprocess_corpus(corpus_dir, out_dir, config: AudioConfig | None = None) -> dict:
    """Process every manifest utterance; returns the summary metadata dict."""
    config = config or AudioConfig()
    corpus_dir, out_dir = str(corpus_dir), str(out_dir)
    records = load_manifest(os.path.join(corpus_dir, "manifest.tsv"))
    if not records:
        raise DataError("manifest is empty")
    for sub in ("mel", "pros", "pros_raw", "align"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    vocab_size = 1 + max(max(rec.phoneme_ids) for rec in records)
    per_utt = {}
    by_speaker: dict[str, list] = {}
    mel_sum, mel_sqsum, mel_count = 0.0, 0.0, 0
    for rec in records:
        clip = load_wav(os.path.join(corpus_dir, rec.audio_path), config.sample_rate)
        alignment = load_alignment(
            os.path.join(corpus_dir, "align", rec.utt_id + ".lab"), vocab_size
        )
        mel, alignment, feats = utterance_features(clip, alignment, config)
        per_utt[rec.utt_id] = (mel, alignment, feats, rec)
        by_speaker.setdefault(rec.speaker_id, []).append(feats)
        mel_sum += mel.values.sum()
        mel_sqsum += (mel.values**2).sum()
        mel_count += mel.values.size

    mel_mean = mel_sum / mel_count
    mel_std = float(np.sqrt(max(mel_sqsum / mel_count - mel_mean**2, 1e-12)))
    stats = {sid: accumulate_speaker_stats(blocks) for sid, blocks in by_speaker.items()}

    for utt_id, (mel, alignment, feats, rec) in per_utt.items():
        targets = normalize_per_speaker(feats, stats[rec.speaker_id])
        save_matrix(os.path.join(out_dir, "mel", utt_id + ".mat"), mel.values)
        save_matrix(os.path.join(out_dir, "pros", utt_id + ".mat"), targets.values)
        save_matrix(os.path.join(out_dir, "pros_raw", utt_id + ".mat"), feats)
        save_alignment(os.path.join(out_dir, "align", utt_id + ".lab"), alignment)

    save_manifest(os.path.join(out_dir, "manifest.tsv"), records)
    speakers = sorted(by_speaker)
    with open(os.path.join(out_dir, "speakers.txt"), "w") as fh:
        fh.write("\n".join(speakers) + "\n")
    save_speaker_stats(os.path.join(out_dir, "speaker_stats.txt"), stats)
    with open(os.path.join(out_dir, "mel_stats.txt"), "w") as fh:
        fh.write(f"{float(mel_mean)!r} {float(mel_std)!r}\n")
    meta = {
        "vocab_size": int(vocab_size),
        "n_mels": int(config.n_mels),
        "n_utterances": len(records),
        "n_speakers": len(speakers),
    }
    with open(os.path.join(out_dir, "meta.yaml"), "w") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)
    log.info("preprocessed %d utterances from %d speakers", len(records), len(speakers))
    return meta
