"""F0 tracker against analytic sinusoid oracles."""

import numpy as np

from emoxfer.config import AudioConfig
from emoxfer.dsp import AudioClip, extract_f0, interpolate_unvoiced

CFG = AudioConfig()


def _sine(freq, seconds=1.0, amp=0.6, rate=16000):
    t = np.arange(int(seconds * rate)) / rate
    return AudioClip(samples=amp * np.sin(2 * np.pi * freq * t), sample_rate=rate)


def test_pure_tone_220hz():
    f0 = extract_f0(_sine(220.0), CFG)
    assert len(f0) == 77
    assert np.all(np.abs(f0 - 220.0) <= 3.0)


def test_silence_is_unvoiced():
    clip = AudioClip(samples=np.zeros(16000), sample_rate=16000)
    assert np.all(extract_f0(clip, CFG) == 0.0)


def test_two_tone_concatenation():
    """Oracle: autocorrelation peak of each ideal sinusoid segment."""
    a = _sine(110.0, seconds=1.0).samples
    b = _sine(220.0, seconds=1.0).samples
    clip = AudioClip(samples=np.concatenate([a, b]), sample_rate=16000)
    f0 = extract_f0(clip, CFG)
    # frames fully inside each half (frame 800 spans 4 hops)
    first = f0[: 77 - 4]
    second = f0[81 : 81 + 77 - 4]
    assert abs(np.median(first) - 110.0) <= 3.0
    assert abs(np.median(second) - 220.0) <= 3.0


def test_amplitude_scale_invariance():
    rng = np.random.default_rng(7)
    t = np.arange(12000) / 16000.0
    voiced = 0.4 * np.sin(2 * np.pi * 180.0 * t) + 0.1 * np.sin(2 * np.pi * 360.0 * t)
    noise = 0.01 * rng.standard_normal(len(t))
    base = AudioClip(samples=voiced + noise, sample_rate=16000)
    ref = extract_f0(base, CFG)
    for c in [2.0, 0.5, 0.3183]:
        scaled = AudioClip(samples=np.clip(c * base.samples, -1, 1), sample_rate=16000)
        np.testing.assert_allclose(extract_f0(scaled, CFG), ref, atol=1e-6)


def test_no_octave_down_on_harmonic_signal():
    t = np.arange(16000) / 16000.0
    rich = 0.5 * np.sin(2 * np.pi * 200 * t) + 0.25 * np.sin(2 * np.pi * 400 * t)
    f0 = extract_f0(AudioClip(samples=rich, sample_rate=16000), CFG)
    voiced = f0[f0 > 0]
    assert np.all(np.abs(voiced - 200.0) <= 4.0)


def test_interpolate_unvoiced_interior_gap():
    values = np.array([1.0, 0.0, 0.0, 4.0, 5.0])
    voiced = np.array([True, False, False, True, True])
    filled, usable = interpolate_unvoiced(values, voiced)
    np.testing.assert_allclose(filled, [1.0, 2.0, 3.0, 4.0, 5.0])
    assert usable.all()


def test_interpolate_unvoiced_edges_stay_unusable():
    values = np.array([0.0, 2.0, 0.0, 4.0, 0.0])
    voiced = np.array([False, True, False, True, False])
    filled, usable = interpolate_unvoiced(values, voiced)
    np.testing.assert_allclose(filled, [0.0, 2.0, 3.0, 4.0, 0.0])
    assert list(usable) == [False, True, True, True, False]
