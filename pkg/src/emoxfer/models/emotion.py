"""Emotion encoder: mel -> discrete emotion type + probability-based intensity.

The encoder is a CNN+GRU feature extractor, a linear logit head, an
adversarial speaker classifier behind a gradient reversal layer, a
straight-through Gumbel-Softmax sampler for the discrete type, and a
modified softmax whose base controls how spread the intensity values are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig
from ..errors import LabelError, ShortInputError

GUMBEL_EPS = 1e-20

# Time-axis stride-2 stages at the front of the conv stack; inputs must
# survive this much downsampling with at least one frame per step.
MIN_EXTRACTOR_FRAMES = 8


def softmax_posterior(z: torch.Tensor) -> torch.Tensor:
    """Numerically stabilized softmax over the last dimension."""
    shifted = z - z.max(dim=-1, keepdim=True).values
    e = torch.exp(shifted)
    return e / e.sum(dim=-1, keepdim=True)


def modified_softmax(z: torch.Tensor, alpha: float) -> torch.Tensor:
    """Base-alpha softmax: alpha**z normalized over the last dimension.

    alpha just above 1 flattens the output toward uniform; large alpha
    saturates the winning entry toward 1. Requires alpha > 1.
    """
    if alpha <= 1.0:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    scaled = z * math.log(alpha)
    shifted = scaled - scaled.max(dim=-1, keepdim=True).values
    e = torch.exp(shifted)
    return e / e.sum(dim=-1, keepdim=True)


def gumbel_softmax_sample(z, tau: float, generator=None, noise=None):
    """Soft sample from the Gumbel-Softmax relaxation of Categorical(softmax(z)).

    noise overrides the Gumbel draw (used by tests to force g = 0).
    """
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    if noise is None:
        u = torch.rand(z.shape, generator=generator, dtype=z.dtype, device=z.device)
        noise = -torch.log(-torch.log(u + GUMBEL_EPS) + GUMBEL_EPS)
    return softmax_posterior((z + noise) / tau)


def straight_through(y: torch.Tensor) -> torch.Tensor:
    """One-hot at argmax(y) in the forward pass, identity Jacobian backward.

    (y - y.detach()) is exactly zero in the forward pass, so the output is
    exactly one-hot while gradients pass through y unchanged.
    """
    index = y.argmax(dim=-1, keepdim=True)
    hard = torch.zeros_like(y).scatter_(-1, index, 1.0)
    return hard + (y - y.detach())


class _GradReverse(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, scale):
        ctx.scale = scale
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return -ctx.scale * grad_output, None


def grad_reverse(x: torch.Tensor, scale: float = 1.0) -> torch.Tensor:
    """Identity forward; gradient multiplied by -scale in the backward pass."""
    return _GradReverse.apply(x, scale)


class _ConvNormStage(nn.Module):
    """Conv2d + per-position channel LayerNorm + ReLU.

    Normalizing each (time, freq) position over channels keeps outputs
    independent of how much padding a batch carries.
    """

    def __init__(self, in_ch: int, out_ch: int, time_stride: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=(time_stride, 2), padding=1)
        self.norm = nn.LayerNorm(out_ch)
        self.time_stride = time_stride

    def forward(self, x):
        x = self.conv(x)
        x = self.norm(x.permute(0, 2, 3, 1))
        return F.relu(x).permute(0, 3, 1, 2)


class FeatureExtractor(nn.Module):
    """Five strided Conv-Norm stages, a bidirectional GRU, and a projection.

    The hidden feature is the projected last-step GRU state (both
    directions), width cfg.emotion_hidden.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        channels = list(cfg.extractor_channels)
        if len(channels) != 5:
            raise ValueError("extractor needs exactly five conv stages")
        time_strides = [2, 2, 2, 1, 1]
        stages = []
        in_ch = 1
        n_freq = cfg.n_mels
        for out_ch, stride in zip(channels, time_strides):
            stages.append(_ConvNormStage(in_ch, out_ch, stride))
            in_ch = out_ch
            n_freq = (n_freq - 1) // 2 + 1
        self.stages = nn.ModuleList(stages)
        self.time_strides = time_strides
        self.gru = nn.GRU(
            channels[-1] * n_freq,
            cfg.extractor_gru_hidden,
            batch_first=True,
            bidirectional=True,
        )
        self.proj = nn.Linear(2 * cfg.extractor_gru_hidden, cfg.emotion_hidden)

    @staticmethod
    def _down(lengths, stride):
        return torch.div(lengths - 1, stride, rounding_mode="floor") + 1

    def forward(self, mel, lengths=None):
        """mel: [B, T, n_mels]; lengths: valid frame counts. Returns [B, d_h]."""
        if mel.dim() == 2:
            mel = mel.unsqueeze(0)
        b, t, _ = mel.shape
        if lengths is None:
            lengths = torch.full((b,), t, dtype=torch.int64)
        lengths = torch.as_tensor(lengths, dtype=torch.int64)
        if int(lengths.min()) < MIN_EXTRACTOR_FRAMES:
            raise ShortInputError(
                f"emotion extractor needs >= {MIN_EXTRACTOR_FRAMES} mel frames, "
                f"got {int(lengths.min())}"
            )
        x = mel.unsqueeze(1)  # [B, 1, T, F]
        for stage in self.stages:
            x = stage(x)
            lengths = self._down(lengths, stage.time_stride)
            valid = torch.arange(x.shape[2], device=x.device)[None, :] < lengths[:, None]
            x = x * valid[:, None, :, None]
        x = x.permute(0, 2, 1, 3).flatten(2)  # [B, T', C*F']
        packed = nn.utils.rnn.pack_padded_sequence(
            x, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        _, h_n = self.gru(packed)
        hidden = torch.cat([h_n[0], h_n[1]], dim=-1)
        return self.proj(hidden)


@dataclass
class EmotionOutcome:
    """Sampled emotion for a batch: discrete IDs, intensities, both samples."""

    type_ids: torch.Tensor    # [B] int64
    intensity: torch.Tensor   # [B] in (0, 1)
    soft: torch.Tensor        # [B, M] Gumbel-Softmax sample
    one_hot: torch.Tensor     # [B, M] straight-through one-hot


class EmotionEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.n_emotions = cfg.n_emotions
        self.n_logits = cfg.n_logits
        self.extractor = FeatureExtractor(cfg)
        self.logit_head = nn.Linear(cfg.emotion_hidden, cfg.n_logits)
        self.speaker_head = nn.Linear(cfg.emotion_hidden, cfg.n_speakers)
        self.reversal_scale = 1.0

    def extract_hidden(self, mel, lengths=None):
        return self.extractor(mel, lengths)

    def project_logits(self, hidden):
        return self.logit_head(hidden)

    def adversarial_speaker_loss(self, hidden, speaker_idx, reverse: bool = True):
        """Speaker cross-entropy whose gradient is flipped below the classifier."""
        branch = grad_reverse(hidden, self.reversal_scale) if reverse else hidden
        return F.cross_entropy(self.speaker_head(branch), speaker_idx)

    def emotion_loss(self, logits, labels):
        """Cross-entropy over all M logits, restricted to labeled utterances.

        labels uses -1 for unlabeled utterances; an all-unlabeled batch
        contributes exactly zero with no gradient.
        """
        labeled = labels >= 0
        if labels.numel() and int(labels.max()) >= self.n_emotions:
            raise LabelError(
                f"emotion label {int(labels.max())} out of range [0, {self.n_emotions})"
            )
        if not bool(labeled.any()):
            return torch.zeros((), dtype=logits.dtype, device=logits.device)
        return F.cross_entropy(logits[labeled], labels[labeled])

    def sample(self, logits, tau: float, alpha: float, generator=None, noise=None):
        soft = gumbel_softmax_sample(logits, tau, generator=generator, noise=noise)
        one_hot = straight_through(soft)
        type_ids = one_hot.argmax(dim=-1)
        intensity = modified_softmax(logits, alpha).gather(-1, type_ids.unsqueeze(-1)).squeeze(-1)
        return EmotionOutcome(type_ids=type_ids, intensity=intensity, soft=soft, one_hot=one_hot)

    def forward(self, mel, lengths, speaker_idx, labels, tau, alpha, generator=None, noise=None):
        """Full training-mode pass.

        Returns (outcome, emo_loss, adv_loss); emo_loss is exactly 0 for a
        batch with no emotion labels.
        """
        hidden = self.extract_hidden(mel, lengths)
        logits = self.project_logits(hidden)
        adv_loss = self.adversarial_speaker_loss(hidden, speaker_idx)
        emo_loss = self.emotion_loss(logits, labels)
        outcome = self.sample(logits, tau, alpha, generator=generator, noise=noise)
        return outcome, emo_loss, adv_loss
