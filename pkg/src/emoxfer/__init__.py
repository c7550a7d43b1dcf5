"""Cross-speaker emotion transfer TTS workbench.

A desk-scale text-to-speech stack that disentangles prosody (the carrier of
emotion) from timbre (the carrier of speaker identity): an emotion encoder
with probability-based intensity, a phoneme-level prosody predictor, a timbre
encoder with a grouped vector-quantization bottleneck, and a
non-autoregressive acoustic backbone, plus a synthetic-corpus harness that
makes the transfer, intensity-control and bottleneck-capacity behaviors
testable.
"""

__version__ = "0.1.0"
