"""Toy corpus generator: determinism, tempo arithmetic, factor separation."""

import hashlib
import os

import numpy as np
import pytest

from emoxfer.config import AudioConfig
from emoxfer.dsp import extract_f0, load_manifest, load_wav
from emoxfer.errors import ConfigError
from emoxfer.synth import mel_envelope, pearson
from emoxfer.toycorpus import (
    DEFAULT_TEMPLATES,
    EmotionTemplate,
    ToyCorpusSpec,
    generate_corpus,
    load_corpus_meta,
)


def tiny_spec(**over):
    base = dict(
        n_source_speakers=2,
        n_target_speakers=1,
        n_emotions=3,
        utterances_per_speaker=4,
        seed=7,
        entangled_emotion=2,
    )
    base.update(over)
    return ToyCorpusSpec(**base)


def _tree_digest(root):
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            with open(os.path.join(dirpath, name), "rb") as fh:
                digest.update(name.encode())
                digest.update(fh.read())
    return digest.hexdigest()


def test_regeneration_is_byte_identical(tmp_path):
    generate_corpus(tiny_spec(), tmp_path / "a")
    generate_corpus(tiny_spec(), tmp_path / "b")
    assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")


def test_different_seed_differs(tmp_path):
    generate_corpus(tiny_spec(), tmp_path / "a")
    generate_corpus(tiny_spec(seed=8), tmp_path / "b")
    assert _tree_digest(tmp_path / "a") != _tree_digest(tmp_path / "b")


def test_tempo_doubling_halves_mean_duration(tmp_path):
    templates_slow = [EmotionTemplate("a", [0.2, -0.2], tempo=1.0),
                      EmotionTemplate("b", [-0.2, 0.2], tempo=1.0)]
    templates_fast = [EmotionTemplate("a", [0.2, -0.2], tempo=2.0),
                      EmotionTemplate("b", [-0.2, 0.2], tempo=2.0)]
    means = []
    for name, templates in [("slow", templates_slow), ("fast", templates_fast)]:
        spec = tiny_spec(
            n_emotions=2, entangled_emotion=1, templates=templates,
            utterances_per_speaker=10, base_duration_frames=(6.0, 12.0),
            source_strength=(1.0, 1.0), target_strength=(1.0, 1.0),
        )
        out = tmp_path / name
        generate_corpus(spec, out)
        from emoxfer.dsp import load_alignment

        durs = []
        for fname in sorted(os.listdir(out / "align")):
            durs.extend(load_alignment(out / "align" / fname).durations_frames)
        means.append(np.mean(durs))
    assert abs(means[1] - means[0] / 2.0) <= 1.0


def test_same_template_across_speakers_shares_contour_not_envelope(tmp_path):
    spec = tiny_spec(utterances_per_speaker=6)
    out = tmp_path / "corpus"
    meta = generate_corpus(spec, out)
    records = load_manifest(out / "manifest.tsv")
    cfg = AudioConfig()

    by_speaker_emotion = {}
    truth = {row["utt_id"]: row for row in meta["utterances"]}
    for rec in records:
        emotion = truth[rec.utt_id]["emotion"]
        by_speaker_emotion.setdefault((rec.speaker_id, emotion), []).append(rec)

    # pick one emotion present for both source speakers
    pairs = [
        (e, by_speaker_emotion[("src0", e)][0], by_speaker_emotion[("src1", e)][0])
        for e in range(spec.n_emotions)
        if ("src0", e) in by_speaker_emotion and ("src1", e) in by_speaker_emotion
    ]
    assert pairs, "no shared emotion between the two source speakers"
    emotion, rec_a, rec_b = pairs[0]

    contours, envelopes = [], []
    for rec in (rec_a, rec_b):
        clip = load_wav(out / rec.audio_path)
        f0 = extract_f0(clip, cfg)
        voiced = f0 > 0
        assert voiced.mean() > 0.8
        logf0 = np.log(f0[voiced])
        resampled = np.interp(np.linspace(0, 1, 50),
                              np.linspace(0, 1, len(logf0)), logf0)
        contours.append(resampled)
        from emoxfer.dsp import compute_mel

        envelopes.append(mel_envelope(compute_mel(clip, cfg).values))
    assert pearson(contours[0], contours[1]) > 0.9
    assert np.linalg.norm(envelopes[0] - envelopes[1]) > 5.0


def test_entangled_emotion_bound_to_last_source_speaker(tmp_path):
    spec = tiny_spec(utterances_per_speaker=30)
    out = tmp_path / "corpus"
    meta = generate_corpus(spec, out)
    truth = {row["utt_id"]: row["emotion"] for row in meta["utterances"]}
    records = load_manifest(out / "manifest.tsv")
    entangled_speakers = {
        rec.speaker_id for rec in records if truth[rec.utt_id] == spec.entangled_emotion
    }
    assert entangled_speakers == {"src1"}  # last source speaker only
    # labeled for sources, unlabeled for targets
    for rec in records:
        if rec.speaker_id.startswith("src"):
            assert rec.emotion_label == truth[rec.utt_id]
        else:
            assert rec.emotion_label is None


def test_alignment_matches_frame_count(tmp_path):
    spec = tiny_spec()
    out = tmp_path / "corpus"
    generate_corpus(spec, out)
    from emoxfer.dsp import compute_mel, load_alignment

    cfg = AudioConfig()
    for rec in load_manifest(out / "manifest.tsv")[:5]:
        clip = load_wav(out / rec.audio_path)
        alignment = load_alignment(out / "align" / (rec.utt_id + ".lab"))
        mel = compute_mel(clip, cfg)
        assert alignment.total_frames == mel.n_frames


def test_spec_validation():
    with pytest.raises(ConfigError):
        ToyCorpusSpec(n_emotions=9)
    with pytest.raises(ConfigError):
        ToyCorpusSpec(n_emotions=3, entangled_emotion=5)
    with pytest.raises(ConfigError):
        ToyCorpusSpec(n_source_speakers=1)
    with pytest.raises(ConfigError):
        ToyCorpusSpec(utterances_per_speaker=0)


def test_meta_round_trip(tmp_path):
    spec = tiny_spec()
    meta = generate_corpus(spec, tmp_path / "c")
    loaded = load_corpus_meta(tmp_path / "c")
    assert loaded["seed"] == spec.seed
    assert len(loaded["templates"]) == spec.n_emotions
    assert len(loaded["speakers"]) == 3
    assert loaded["templates"][0]["contour"] == [float(x) for x in DEFAULT_TEMPLATES[0].contour]
