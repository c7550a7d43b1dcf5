"""Phoneme averaging and per-speaker normalization."""

import numpy as np
import pytest

from emoxfer.dsp import (
    PhonemeAlignment,
    SpeakerStats,
    accumulate_speaker_stats,
    denormalize,
    normalize_per_speaker,
    phoneme_average,
)
from emoxfer.dsp.prosody import stats_for
from emoxfer.errors import AlignmentError, MissingStatsError


def test_constant_input_single_phoneme():
    np.testing.assert_allclose(phoneme_average([2, 2, 2], [3]), [2.0])


def test_hand_means():
    np.testing.assert_allclose(phoneme_average([1, 3, 5, 7, 9], [2, 3]), [2.0, 7.0])


def test_voiced_mask_filters_frames():
    out = phoneme_average([4, 0, 8], [3], voiced_mask=[True, False, True])
    np.testing.assert_allclose(out, [6.0])


def test_all_unvoiced_interval_uses_utterance_voiced_mean():
    out = phoneme_average(
        [10.0, 0.0, 0.0, 20.0], [1, 2, 1], voiced_mask=[True, False, False, True]
    )
    np.testing.assert_allclose(out, [10.0, 15.0, 20.0])


def test_duration_mismatch_raises():
    with pytest.raises(AlignmentError):
        phoneme_average([1, 2, 3], [2, 2])


def test_accepts_alignment_object():
    alignment = PhonemeAlignment(phoneme_ids=[5, 6], durations_frames=[2, 3])
    np.testing.assert_allclose(
        phoneme_average([1, 3, 5, 7, 9], alignment), [2.0, 7.0]
    )


def test_normalize_at_mean_is_zero():
    stats = SpeakerStats(mean=[1.0, 2.0, 3.0], std=[0.5, 1.0, 2.0])
    targets = normalize_per_speaker(np.array([[1.0, 2.0, 3.0]]), stats)
    np.testing.assert_allclose(targets.values, 0.0)


def test_mean_plus_two_std_maps_to_two():
    stats = SpeakerStats(mean=[1.0, 2.0, 3.0], std=[0.5, 1.0, 2.0])
    feats = stats.mean + 2.0 * stats.std
    targets = normalize_per_speaker(feats[None, :], stats)
    np.testing.assert_allclose(targets.values, 2.0)


def test_round_trip_identity():
    rng = np.random.default_rng(11)
    stats = SpeakerStats(mean=rng.normal(size=3), std=np.abs(rng.normal(size=3)) + 0.1)
    feats = rng.normal(size=(17, 3))
    back = denormalize(normalize_per_speaker(feats, stats), stats)
    np.testing.assert_allclose(back, feats, rtol=1e-6)


def test_training_set_statistics_are_standardized():
    rng = np.random.default_rng(5)
    blocks = [rng.normal(loc=[2, -1, 4], scale=[3, 0.5, 1], size=(rng.integers(4, 12), 3))
              for _ in range(20)]
    stats = accumulate_speaker_stats(blocks)
    normalized = np.concatenate(
        [normalize_per_speaker(b, stats).values for b in blocks]
    )
    np.testing.assert_allclose(normalized.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(normalized.std(axis=0), 1.0, atol=1e-6)


def test_missing_speaker_raises():
    with pytest.raises(MissingStatsError):
        stats_for({}, "nobody")


def test_std_clamped_positive():
    stats = SpeakerStats(mean=[0, 0, 0], std=[0.0, 1.0, 1.0])
    assert np.all(stats.std > 0)
