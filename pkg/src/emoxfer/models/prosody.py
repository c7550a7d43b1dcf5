"""Prosody predictor: hidden sequence -> per-phoneme (log-F0, energy, log-duration).

The three dimensions come from a single head so their dependence can be
modeled jointly. Outputs are in per-speaker normalized units; realization
against a target speaker's statistics happens at inference.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig
from ..dsp.prosody import SpeakerStats, denormalize

N_PROSODY_DIMS = 3


class ProsodyPredictor(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        pad = cfg.prosody_kernel // 2
        self.convs = nn.ModuleList(
            nn.Conv1d(cfg.d_model, cfg.d_model, cfg.prosody_kernel, padding=pad)
            for _ in range(cfg.prosody_layers)
        )
        self.norms = nn.ModuleList(
            nn.LayerNorm(cfg.d_model) for _ in range(cfg.prosody_layers)
        )
        self.dropout = nn.Dropout(cfg.prosody_dropout)
        self.out = nn.Linear(cfg.d_model, N_PROSODY_DIMS)

    def forward(self, hidden, valid=None):
        """hidden: [B, P, d] (or [P, d]); returns [B, P, 3] (or [P, 3])."""
        squeeze = hidden.dim() == 2
        x = hidden.unsqueeze(0) if squeeze else hidden
        for conv, norm in zip(self.convs, self.norms):
            x = conv(x.transpose(1, 2)).transpose(1, 2)
            x = self.dropout(norm(F.relu(x)))
            if valid is not None:
                x = x * valid.unsqueeze(-1)
        x = self.out(x)
        if valid is not None:
            x = x * valid.unsqueeze(-1)
        return x.squeeze(0) if squeeze else x


def prosody_loss(pred, target, valid=None):
    """Mean squared error over phonemes and the 3 prosodic dimensions."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    sq = (pred - target) ** 2
    if valid is None:
        return sq.mean()
    weight = valid.unsqueeze(-1).to(sq.dtype)
    return (sq * weight).sum() / (weight.sum() * sq.shape[-1])


def realize_prosody(pred, target_stats: SpeakerStats):
    """Denormalize a normalized prediction with the target speaker's stats.

    Returns (values [P, 3] with log-F0 / energy dB / log-duration, and the
    integer frame durations with the exp-rounded log-duration clamped >= 1).
    """
    if isinstance(pred, torch.Tensor):
        pred = pred.detach().cpu().numpy()
    values = denormalize(np.asarray(pred, dtype=np.float64), target_stats)
    durations = np.rint(np.exp(values[:, 2])).astype(np.int64)
    durations = np.maximum(durations, 1)
    return values, durations
