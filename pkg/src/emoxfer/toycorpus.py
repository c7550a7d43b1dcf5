"""Synthetic harmonic-plus-noise corpus with known disentanglement ground truth.

Every corpus factor is applied through a disjoint generative knob:

* phonemes     -> harmonic amplitude pattern (shared across speakers),
* emotion      -> prosody only: F0 contour shape, tempo, energy offset,
* speaker      -> spectral envelope plus base pitch/tempo/energy statistics.

Because emotion never touches the spectral envelope and speakers never touch
the contour shape, transfer quality can be measured against the generator's
own templates.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .dsp.audio import AudioClip, save_wav
from .dsp.manifest import PhonemeAlignment, UtteranceRecord, save_alignment, save_manifest
from .errors import ConfigError

SAMPLE_RATE = 16000
FRAME_SHIFT = 200          # samples; matches the analysis frontend
FRAME_TAIL = 600           # extra samples so n_frames == sum(durations) exactly
NOISE_FLOOR_DB = -50.0
MAX_HARMONICS = 12
ENVELOPE_ANCHORS_HZ = np.arange(0.0, 8001.0, 500.0)


@dataclass
class EmotionTemplate:
    name: str
    contour: list              # coarse log-F0 shape, interpolated over [0, 1]
    tempo: float = 1.0         # >1 shortens phonemes
    energy_offset_db: float = 0.0

    def contour_at(self, positions) -> np.ndarray:
        anchors = np.linspace(0.0, 1.0, len(self.contour))
        return np.interp(positions, anchors, np.asarray(self.contour, dtype=np.float64))


DEFAULT_TEMPLATES = [
    EmotionTemplate("calm", contour=[0.3, 0.15, 0.0, -0.15, -0.3], tempo=1.0,
                    energy_offset_db=0.0),
    EmotionTemplate("rise", contour=[-1.0, -0.5, 0.0, 0.5, 1.0], tempo=1.15,
                    energy_offset_db=3.0),
    EmotionTemplate("peak", contour=[-0.5, 0.4, 1.1, 0.4, -0.5], tempo=0.88,
                    energy_offset_db=1.5),
    EmotionTemplate("dip", contour=[0.6, -0.3, -1.1, -0.3, 0.6], tempo=0.78,
                    energy_offset_db=-2.0),
]


@dataclass
class ToyCorpusSpec:
    n_source_speakers: int = 4
    n_target_speakers: int = 2
    n_emotions: int = 4
    utterances_per_speaker: int = 40
    seed: int = 0
    entangled_emotion: int = 3     # produced by the last source speaker only
    vocab_size: int = 10
    phonemes_per_utt: tuple = (5, 8)
    base_duration_frames: tuple = (3.0, 7.0)
    source_strength: tuple = (0.6, 1.4)
    target_strength: tuple = (0.25, 0.6)
    templates: list = field(default_factory=lambda: list(DEFAULT_TEMPLATES))

    def __post_init__(self):
        if self.n_emotions < 2 or self.n_emotions > len(self.templates):
            raise ConfigError(
                f"n_emotions must be in [2, {len(self.templates)}], got {self.n_emotions}"
            )
        if not 0 <= self.entangled_emotion < self.n_emotions:
            raise ConfigError("entangled_emotion outside the template range")
        if self.n_source_speakers < 2 or self.n_target_speakers < 1:
            raise ConfigError("need >= 2 source and >= 1 target speakers")
        if self.utterances_per_speaker < 1:
            raise ConfigError("utterances_per_speaker must be >= 1")


@dataclass
class SpeakerProfile:
    speaker_id: str
    is_source: bool
    base_logf0: float
    f0_range: float
    tempo: float
    energy_db: float
    envelope_db: list          # gains at ENVELOPE_ANCHORS_HZ

    def envelope_gain(self, freqs_hz) -> np.ndarray:
        db = np.interp(freqs_hz, ENVELOPE_ANCHORS_HZ, np.asarray(self.envelope_db))
        return 10.0 ** (db / 20.0)


def _speaker_profiles(spec: ToyCorpusSpec) -> list:
    profiles = []
    total = spec.n_source_speakers + spec.n_target_speakers
    for idx in range(total):
        rng = np.random.default_rng([spec.seed, 1000 + idx])
        is_source = idx < spec.n_source_speakers
        name = f"src{idx}" if is_source else f"tgt{idx - spec.n_source_speakers}"
        raw = rng.normal(0.0, 5.0, size=len(ENVELOPE_ANCHORS_HZ))
        smooth = np.convolve(raw, np.ones(3) / 3.0, mode="same")
        profiles.append(
            SpeakerProfile(
                speaker_id=name,
                is_source=is_source,
                base_logf0=float(rng.uniform(np.log(120.0), np.log(260.0))),
                f0_range=float(rng.uniform(0.12, 0.20)),
                tempo=float(rng.uniform(0.9, 1.1)),
                energy_db=float(rng.uniform(-5.0, 0.0)),
                envelope_db=[float(x) for x in smooth],
            )
        )
    return profiles


def _phoneme_harmonics(spec: ToyCorpusSpec) -> np.ndarray:
    """Shared content factor: harmonic weights per phoneme, fundamental fixed at 1."""
    rng = np.random.default_rng([spec.seed, 7])
    weights = rng.uniform(0.05, 0.8, size=(spec.vocab_size, MAX_HARMONICS))
    weights[:, 0] = 1.0
    return weights


def _emotion_for(spec: ToyCorpusSpec, speaker_idx: int, is_source: bool, rng) -> int:
    regular = [e for e in range(spec.n_emotions) if e != spec.entangled_emotion]
    if not is_source:
        return int(rng.choice(regular))
    if speaker_idx == spec.n_source_speakers - 1:
        # the entangled speaker carries every emotion, its exclusive one often
        if rng.uniform() < 0.4:
            return spec.entangled_emotion
        return int(rng.choice(regular))
    return int(rng.choice(regular))


def synthesize_utterance(
    spec: ToyCorpusSpec,
    profile: SpeakerProfile,
    template: EmotionTemplate,
    strength: float,
    phoneme_ids: np.ndarray,
    durations: np.ndarray,
    rng,
) -> AudioClip:
    """Harmonic-plus-noise rendering of one utterance."""
    harmonics = _phoneme_harmonics(spec)
    n_frames = int(durations.sum())
    n_samples = n_frames * FRAME_SHIFT + FRAME_TAIL
    pos = np.arange(n_samples) / max(n_samples - 1, 1)

    jitter_anchors = rng.normal(0.0, 0.01, size=4)
    jitter = np.interp(pos, np.linspace(0, 1, 4), jitter_anchors)
    logf0 = (
        profile.base_logf0
        + profile.f0_range * strength * template.contour_at(pos)
        + jitter
    )
    f0 = np.clip(np.exp(logf0), 70.0, 450.0)
    phase = 2.0 * np.pi * np.cumsum(f0) / SAMPLE_RATE

    # per-sample phoneme index (tail samples extend the final phoneme)
    spans = np.repeat(np.arange(len(phoneme_ids)), durations * FRAME_SHIFT)
    spans = np.concatenate([spans, np.full(FRAME_TAIL, len(phoneme_ids) - 1)])

    signal = np.zeros(n_samples)
    for k in range(1, MAX_HARMONICS + 1):
        freq = k * f0
        audible = freq < 6800.0
        if not audible.any():
            break
        weight = harmonics[phoneme_ids[spans], k - 1]
        amp = weight * profile.envelope_gain(freq) * audible
        signal += amp * np.sin(k * phase)

    # per-phoneme energy variation plus the emotion offset
    phoneme_energy = rng.uniform(-1.5, 1.5, size=len(phoneme_ids))
    energy_db = (
        -23.0
        + profile.energy_db
        + template.energy_offset_db * strength
        + phoneme_energy[spans]
    )
    target_rms = 10.0 ** (energy_db / 20.0)
    frame_view = signal[: n_frames * FRAME_SHIFT].reshape(n_frames, FRAME_SHIFT)
    frame_rms = np.sqrt((frame_view**2).mean(axis=1)) + 1e-9
    gain = np.repeat(target_rms[: n_frames * FRAME_SHIFT : FRAME_SHIFT] / frame_rms, FRAME_SHIFT)
    gain = np.concatenate([gain, np.full(FRAME_TAIL, gain[-1])])
    signal = signal * gain
    signal += 10.0 ** (NOISE_FLOOR_DB / 20.0) * rng.standard_normal(n_samples)

    peak = np.abs(signal).max()
    if peak > 0.99:
        signal = signal * (0.99 / peak)
    return AudioClip(samples=signal, sample_rate=SAMPLE_RATE)


def generate_corpus(spec: ToyCorpusSpec, out_dir) -> dict:
    """Write WAVs, alignments, the manifest and the ground-truth metadata."""
    out_dir = str(out_dir)
    os.makedirs(os.path.join(out_dir, "wav"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "align"), exist_ok=True)
    profiles = _speaker_profiles(spec)
    records = []
    truth_rows = []
    for s_idx, profile in enumerate(profiles):
        for u_idx in range(spec.utterances_per_speaker):
            rng = np.random.default_rng([spec.seed, s_idx, u_idx])
            emotion = _emotion_for(spec, s_idx, profile.is_source, rng)
            template = spec.templates[emotion]
            lo, hi = (spec.source_strength if profile.is_source else spec.target_strength)
            strength = float(rng.uniform(lo, hi))
            n_phon = int(rng.integers(spec.phonemes_per_utt[0], spec.phonemes_per_utt[1] + 1))
            phoneme_ids = rng.integers(0, spec.vocab_size, size=n_phon)
            base = rng.uniform(*spec.base_duration_frames, size=n_phon)
            tempo_eff = profile.tempo * template.tempo**strength
            durations = np.maximum(np.rint(base / tempo_eff).astype(np.int64), 2)

            clip = synthesize_utterance(
                spec, profile, template, strength, phoneme_ids, durations, rng
            )
            utt_id = f"{profile.speaker_id}_{u_idx:03d}"
            save_wav(os.path.join(out_dir, "wav", utt_id + ".wav"), clip)
            save_alignment(
                os.path.join(out_dir, "align", utt_id + ".lab"),
                PhonemeAlignment(phoneme_ids=phoneme_ids, durations_frames=durations),
            )
            records.append(
                UtteranceRecord(
                    audio_path=os.path.join("wav", utt_id + ".wav"),
                    speaker_id=profile.speaker_id,
                    phoneme_ids=[int(p) for p in phoneme_ids],
                    emotion_label=emotion if profile.is_source else None,
                )
            )
            truth_rows.append(
                {"utt_id": utt_id, "emotion": emotion, "strength": strength}
            )
    save_manifest(os.path.join(out_dir, "manifest.tsv"), records)
    meta = {
        "seed": spec.seed,
        "vocab_size": spec.vocab_size,
        "n_emotions": spec.n_emotions,
        "entangled_emotion": spec.entangled_emotion,
        "templates": [
            {
                "name": t.name,
                "contour": [float(c) for c in t.contour],
                "tempo": float(t.tempo),
                "energy_offset_db": float(t.energy_offset_db),
            }
            for t in spec.templates[: spec.n_emotions]
        ],
        "speakers": [
            {
                "speaker_id": p.speaker_id,
                "is_source": p.is_source,
                "base_logf0": p.base_logf0,
                "f0_range": p.f0_range,
                "tempo": p.tempo,
                "energy_db": p.energy_db,
                "envelope_db": p.envelope_db,
            }
            for p in profiles
        ],
        "utterances": truth_rows,
    }
    with open(os.path.join(out_dir, "corpus_meta.yaml"), "w") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)
    return meta


def load_corpus_meta(corpus_dir) -> dict:
    with open(os.path.join(str(corpus_dir), "corpus_meta.yaml")) as fh:
        return yaml.safe_load(fh)
