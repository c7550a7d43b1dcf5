"""Synthesis-side helpers: checkpoint loading, transfer metrics, test sentences."""

from __future__ import annotations

import numpy as np
import torch

from .config import AudioConfig
from .dsp.prosody import accumulate_speaker_stats
from .errors import CheckpointError, DataError, UnknownSpeakerError
from .models import TransferModel
from .train.checkpoint import load_checkpoint
from .train.data import PreparedDataset

GL_ITERATIONS = 40
MIN_VOICED_FRACTION = 0.3


def load_model(checkpoint_path):
    """Rebuild a TransferModel (and its metadata) from a checkpoint file."""
    ckpt = load_checkpoint(checkpoint_path)
    config = ckpt.run_config()
    model = TransferModel(config.model)
    ckpt.restore_model(model)
    model.eval()
    return model, ckpt, config


def trained_speakers(ckpt) -> list:
    arr = ckpt.tensors.get("meta/speakers")
    if arr is None:
        raise CheckpointError("checkpoint carries no speaker list")
    return arr.tobytes().decode("utf-8").split("\n")


def _median_smooth(values: np.ndarray, width: int = 5) -> np.ndarray:
    """Running median; edge windows shrink so edge glitches are still voted out."""
    half = width // 2
    return np.array(
        [np.median(values[max(0, i - half) : i + half + 1]) for i in range(len(values))]
    )


def f0_proxy_contour(mel_values, config: AudioConfig | None = None) -> np.ndarray:
    """Per-frame log-F0 recovered from a mel-spectrogram.

    The mel is rendered to audio with Griffin-Lim and tracked with the
    normalized-autocorrelation pitch extractor; unvoiced gaps are
    interpolated and the trace median-smoothed. Returns an empty array when
    too little of the signal is voiced to define a contour.
    """
    from .dsp.pitch import extract_f0
    from .vocoder import griffin_lim_preview

    config = config or AudioConfig()
    clip = griffin_lim_preview(mel_values, config, iterations=GL_ITERATIONS)
    f0 = extract_f0(clip, config)
    voiced = f0 > 0
    if voiced.sum() < max(4, MIN_VOICED_FRACTION * len(f0)):
        return np.empty(0)
    idx = np.flatnonzero(voiced)
    dense = np.interp(np.arange(len(f0)), idx, np.log(f0[idx]))
    return _median_smooth(dense)


def mel_envelope(mel_values) -> np.ndarray:
    """Time-averaged mel vector with the scalar mean removed (loudness-free)."""
    env = np.asarray(mel_values, dtype=np.float64).mean(axis=0)
    return env - env.mean()


def speaker_envelopes(dataset: PreparedDataset) -> dict:
    """Per-speaker mean envelope over that speaker's corpus utterances."""
    out = {}
    for sid in dataset.speakers:
        utts = dataset.by_speaker(sid)
        if not utts:
            continue
        out[sid] = np.mean([mel_envelope(u.mel) for u in utts], axis=0)
    return out


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a**2).sum() * (b**2).sum())
    if denom < 1e-12:
        return 0.0
    return float((a * b).sum() / denom)


def template_correlation(mel_values, template_contour, config=None) -> float:
    """Pearson r between the synthesized F0 proxy and an emotion template."""
    proxy = f0_proxy_contour(mel_values, config)
    if len(proxy) == 0:
        return 0.0
    positions = np.linspace(0.0, 1.0, len(proxy))
    anchors = np.linspace(0.0, 1.0, len(template_contour))
    reference = np.interp(positions, anchors, np.asarray(template_contour, dtype=np.float64))
    return pearson(proxy, reference)


def make_test_sentences(vocab_size: int, n_sentences: int, seed: int,
                        length_range=(5, 8)) -> list:
    rng = np.random.default_rng([seed, 99])
    sentences = []
    for _ in range(n_sentences):
        n = int(rng.integers(length_range[0], length_range[1] + 1))
        sentences.append([int(p) for p in rng.integers(0, vocab_size, size=n)])
    return sentences


def zero_shot_reference(model, dataset: PreparedDataset, speaker_id: str, n_refs: int):
    """Averaged VQ timbre plus prosody stats estimated from reference utterances.

    Mirrors the zero-shot operating point: the target speaker is characterized
    only by a handful of utterances, so both the timbre encoding and the
    prosody statistics come from those references.
    """
    from .matio import load_matrix
    import os

    utts = dataset.by_speaker(speaker_id)
    if not utts:
        raise UnknownSpeakerError(f"no utterances for speaker {speaker_id!r}")
    if n_refs < 1:
        raise DataError("need at least one reference utterance")
    refs = utts[:n_refs]
    mels = [torch.from_numpy(dataset.normalized_mel(u)) for u in refs]
    timbre = model.timbre_encoder.average_timbre(mels)
    raw_feats = [
        load_matrix(os.path.join(dataset.root, "pros_raw", u.utt_id + ".mat"))
        for u in refs
    ]
    stats = accumulate_speaker_stats(raw_feats)
    return timbre, stats, [u.utt_id for u in refs]


def transfer_metrics(mel_values, template_contour, envelopes: dict, target_speaker: str,
                     source_speakers: list, config=None) -> dict:
    """Emotion-contour correlation and speaker-envelope distances for one mel."""
    env = mel_envelope(mel_values)
    distances = {sid: float(np.linalg.norm(env - envelopes[sid])) for sid in envelopes}
    source_dists = {sid: distances[sid] for sid in source_speakers if sid in distances}
    return {
        "template_correlation": template_correlation(mel_values, template_contour, config),
        "target_distance": distances.get(target_speaker, float("inf")),
        "min_source_distance": min(source_dists.values()) if source_dists else float("inf"),
        "closest_speaker": min(distances, key=distances.get),
    }
