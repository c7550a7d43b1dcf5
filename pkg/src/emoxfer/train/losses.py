"""The four-term training objective.

total = L_mel + lambda_pros * L_pros + lambda_adv * L_adv_spk
        + lambda_emo * L_emo_source  (+ VQ commitment when zero-shot)

L_mel is mean absolute error over frames and mel bands; L_pros is mean
squared error over phonemes and prosody dimensions; the other two are
cross-entropies computed upstream. Defaults for the lambdas are
(0.8, 0.01, 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..models.prosody import prosody_loss

DEFAULT_LAMBDAS = (0.8, 0.01, 0.5)


@dataclass
class LossBreakdown:
    l_mel: torch.Tensor
    l_pros: torch.Tensor
    l_adv_spk: torch.Tensor
    l_emo_source: torch.Tensor
    total: torch.Tensor
    l_commit: torch.Tensor | None = None

    def detached(self) -> dict:
        def value(t):
            return float(t.detach()) if isinstance(t, torch.Tensor) else float(t)

        out = {
            "l_mel": value(self.l_mel),
            "l_pros": value(self.l_pros),
            "l_adv": value(self.l_adv_spk),
            "l_emo": value(self.l_emo_source),
            "total": value(self.total),
        }
        if self.l_commit is not None:
            out["l_commit"] = value(self.l_commit)
        return out

    def is_finite(self) -> bool:
        return bool(torch.isfinite(self.total))


def masked_mel_mae(pred_mel, true_mel, frame_valid=None):
    """Mean absolute error over valid frames x mel bands."""
    if pred_mel.shape != true_mel.shape:
        raise ValueError(
            f"mel shape mismatch: {tuple(pred_mel.shape)} vs {tuple(true_mel.shape)}"
        )
    err = (pred_mel - true_mel).abs()
    if frame_valid is None:
        return err.mean()
    weight = frame_valid.unsqueeze(-1).to(err.dtype)
    return (err * weight).sum() / (weight.sum() * err.shape[-1])


def composite_loss(
    pred_mel,
    true_mel,
    pred_pros,
    true_pros,
    adv_loss,
    emo_loss,
    lambdas=DEFAULT_LAMBDAS,
    frame_valid=None,
    phoneme_valid=None,
    commit_loss=None,
) -> LossBreakdown:
    """Weighted sum of the four loss terms (plus optional VQ commitment).

    emo_loss must already be masked to labeled utterances (exactly zero for
    an all-unlabeled batch).
    """
    lambda_pros, lambda_adv, lambda_emo = lambdas
    l_mel = masked_mel_mae(pred_mel, true_mel, frame_valid)
    l_pros = prosody_loss(pred_pros, true_pros, phoneme_valid)
    total = l_mel + lambda_pros * l_pros + lambda_adv * adv_loss + lambda_emo * emo_loss
    if commit_loss is not None:
        total = total + commit_loss
    return LossBreakdown(
        l_mel=l_mel,
        l_pros=l_pros,
        l_adv_spk=adv_loss,
        l_emo_source=emo_loss,
        total=total,
        l_commit=commit_loss,
    )
