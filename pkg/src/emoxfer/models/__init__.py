"""Trainable modules: emotion encoder, prosody predictor, timbre encoder, backbone."""

from .emotion import (
    EmotionEncoder,
    EmotionOutcome,
    FeatureExtractor,
    grad_reverse,
    gumbel_softmax_sample,
    modified_softmax,
    softmax_posterior,
    straight_through,
)
from .prosody import ProsodyPredictor, prosody_loss, realize_prosody
from .timbre import GroupedVQ, SpeakerEmbedder, TimbreEncoder, load_external_embeddings
from .acoustic import MelDecoder, PhonemeEncoder, TransferModel, length_regulate

__all__ = [
    "EmotionEncoder",
    "EmotionOutcome",
    "FeatureExtractor",
    "GroupedVQ",
    "MelDecoder",
    "PhonemeEncoder",
    "ProsodyPredictor",
    "SpeakerEmbedder",
    "TimbreEncoder",
    "TransferModel",
    "grad_reverse",
    "gumbel_softmax_sample",
    "length_regulate",
    "load_external_embeddings",
    "modified_softmax",
    "prosody_loss",
    "realize_prosody",
    "softmax_posterior",
    "straight_through",
]
