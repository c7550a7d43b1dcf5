"""Non-autoregressive backbone: phoneme encoder, composition, length regulation, decoder.

Dataflow contract: the emotion encoding joins at the phoneme level, prosody
is injected next, the result is up-sampled to frames, and only then is the
timbre encoding broadcast-added. Timbre therefore has no path into the
prosody predictor's input.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from ..config import ModelConfig
from ..dsp.prosody import SpeakerStats
from ..errors import LabelError
from .emotion import EmotionEncoder, modified_softmax
from .prosody import ProsodyPredictor, realize_prosody
from .timbre import TimbreEncoder
from .transformer import FFTBlock, lengths_to_mask, sinusoidal_positions


def length_regulate(hidden, durations):
    """Repeat row i of each sequence durations[i] times, order preserved.

    hidden: [B, P, d] (or [P, d]); durations: matching int tensor, padded
    entries zero. Returns (frames [B, T_max, d], frame_lengths [B]).
    """
    squeeze = hidden.dim() == 2
    h = hidden.unsqueeze(0) if squeeze else hidden
    d = torch.as_tensor(durations, dtype=torch.int64, device=h.device)
    d = d.unsqueeze(0) if d.dim() == 1 else d
    if bool((d < 0).any()):
        raise ValueError("durations must be non-negative (0 allowed only as padding)")
    expanded = []
    for b in range(h.shape[0]):
        keep = d[b] > 0
        if not bool(keep.any()):
            raise ValueError("each sequence needs at least one positive duration")
        expanded.append(torch.repeat_interleave(h[b][keep], d[b][keep], dim=0))
    frame_lengths = torch.tensor([e.shape[0] for e in expanded], dtype=torch.int64)
    frames = nn.utils.rnn.pad_sequence(expanded, batch_first=True)
    if squeeze:
        return frames.squeeze(0), frame_lengths
    return frames, frame_lengths


class PhonemeEncoder(nn.Module):
    """Embedding + sinusoidal positions + FFT blocks."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.embedding = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.blocks = nn.ModuleList(
            FFTBlock(cfg.d_model, cfg.attention_heads, cfg.ffn_hidden, cfg.ffn_kernel, cfg.dropout)
            for _ in range(cfg.encoder_blocks)
        )

    def forward(self, phoneme_ids, valid=None):
        squeeze = phoneme_ids.dim() == 1
        ids = phoneme_ids.unsqueeze(0) if squeeze else phoneme_ids
        if int(ids.max()) >= self.embedding.num_embeddings or int(ids.min()) < 0:
            raise LabelError(f"phoneme id out of range [0, {self.embedding.num_embeddings})")
        x = self.embedding(ids)
        x = x + sinusoidal_positions(x.shape[1], x.shape[2], dtype=x.dtype, device=x.device)
        if valid is not None:
            x = x * valid.unsqueeze(-1)
        for block in self.blocks:
            x = block(x, valid)
        return x.squeeze(0) if squeeze else x


class MelDecoder(nn.Module):
    """Prosody-injection conv, FFT blocks over frames, linear projection to mel."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.prosody_conv = nn.Conv1d(3, cfg.d_model, 3, padding=1)
        self.blocks = nn.ModuleList(
            FFTBlock(cfg.d_model, cfg.attention_heads, cfg.ffn_hidden, cfg.ffn_kernel, cfg.dropout)
            for _ in range(cfg.decoder_blocks)
        )
        self.out = nn.Linear(cfg.d_model, cfg.n_mels)

    def inject_prosody(self, hidden, prosody, valid=None):
        """Add a conv-transformed [.., P, 3] prosody track to the hidden sequence."""
        if hidden.shape[:-1] != prosody.shape[:-1]:
            raise ValueError(
                f"prosody length {tuple(prosody.shape)} does not match hidden {tuple(hidden.shape)}"
            )
        squeeze = hidden.dim() == 2
        h = hidden.unsqueeze(0) if squeeze else hidden
        p = prosody.unsqueeze(0) if squeeze else prosody
        track = self.prosody_conv(p.transpose(1, 2)).transpose(1, 2)
        out = h + track
        if valid is not None:
            out = out * valid.unsqueeze(-1)
        return out.squeeze(0) if squeeze else out

    def decode(self, frames, valid=None):
        squeeze = frames.dim() == 2
        x = frames.unsqueeze(0) if squeeze else frames
        x = x + sinusoidal_positions(x.shape[1], x.shape[2], dtype=x.dtype, device=x.device)
        if valid is not None:
            x = x * valid.unsqueeze(-1)
        for block in self.blocks:
            x = block(x, valid)
        x = self.out(x)
        if valid is not None:
            x = x * valid.unsqueeze(-1)
        return x.squeeze(0) if squeeze else x


class TransferModel(nn.Module):
    """The full trainable stack, wired in the disentanglement order."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.emotion_encoder = EmotionEncoder(cfg)
        self.prosody_predictor = ProsodyPredictor(cfg)
        self.timbre_encoder = TimbreEncoder(cfg)
        self.phoneme_encoder = PhonemeEncoder(cfg)
        self.decoder = MelDecoder(cfg)
        self.emotion_table = nn.Embedding(cfg.n_logits, cfg.d_model)

    def emotion_encoding_from_outcome(self, outcome):
        """Training path: straight-through one-hot times intensity, [B, d]."""
        rows = outcome.one_hot @ self.emotion_table.weight
        return rows * outcome.intensity.unsqueeze(-1)

    def emotion_encoding(self, type_id: int, intensity: float, dtype=torch.float32):
        """Inference path: externally controlled type and intensity."""
        if not 0 <= type_id < self.emotion_table.num_embeddings:
            raise LabelError(f"emotion type {type_id} out of range")
        row = self.emotion_table.weight[type_id].to(dtype)
        return row * float(intensity)

    def forward_train(self, batch, tau: float, alpha: float, generator=None):
        """Teacher-forced training pass over a padded batch dict.

        batch keys: mel [B,T,80], mel_lengths, phonemes [B,P], phoneme_lengths,
        durations [B,P], prosody [B,P,3], speakers [B], labels [B] (-1 =
        unlabeled). Returns (pred_mel, valid_frame_mask, parts dict).
        """
        phoneme_valid = lengths_to_mask(batch["phoneme_lengths"], batch["phonemes"].shape[1])
        outcome, emo_loss, adv_loss = self.emotion_encoder(
            batch["mel"], batch["mel_lengths"], batch["speakers"], batch["labels"],
            tau, alpha, generator=generator,
        )
        pe = self.phoneme_encoder(batch["phonemes"], phoneme_valid)
        hidden = pe + self.emotion_encoding_from_outcome(outcome).unsqueeze(1)
        if phoneme_valid is not None:
            hidden = hidden * phoneme_valid.unsqueeze(-1)
        pred_pros = self.prosody_predictor(hidden, phoneme_valid)
        injected = self.decoder.inject_prosody(hidden, batch["prosody"], phoneme_valid)
        frames, frame_lengths = length_regulate(injected, batch["durations"])
        frame_valid = lengths_to_mask(frame_lengths, frames.shape[1], device=frames.device)
        commit = frames.new_zeros(())
        if self.timbre_encoder.mode == "lookup":
            timbre = self.timbre_encoder.lookup(batch["speakers"])
        else:
            timbre, _, commit = self.timbre_encoder.encode_utterances(
                batch["mel"], batch["mel_lengths"], update=True
            )
        frames = frames + timbre.unsqueeze(1)
        frames = frames * frame_valid.unsqueeze(-1)
        pred_mel = self.decoder.decode(frames, frame_valid)
        parts = {
            "pred_pros": pred_pros,
            "emo_loss": emo_loss,
            "adv_loss": adv_loss,
            "commit_loss": commit,
            "outcome": outcome,
            "frame_valid": frame_valid,
            "phoneme_valid": phoneme_valid,
        }
        return pred_mel, frame_valid, parts

    @torch.no_grad()
    def synthesize(
        self,
        phoneme_ids,
        type_id: int,
        intensity: float,
        timbre,
        target_stats: SpeakerStats,
        mel_stats=None,
    ):
        """Full inference chain; deterministic given parameters and inputs.

        Returns (mel [T, n_mels] np.ndarray, realized prosody [P, 3],
        durations [P]). mel_stats (mean, std) un-normalizes the decoder
        output when given.
        """
        was_training = self.training
        self.eval()
        try:
            ids = torch.as_tensor(phoneme_ids, dtype=torch.int64)
            pe = self.phoneme_encoder(ids)
            ee = self.emotion_encoding(type_id, intensity, dtype=pe.dtype)
            hidden = pe + ee
            pred_pros = self.prosody_predictor(hidden)
            realized, durations = realize_prosody(pred_pros, target_stats)
            injected = self.decoder.inject_prosody(hidden, pred_pros)
            frames, _ = length_regulate(injected, torch.from_numpy(durations))
            timbre = torch.as_tensor(timbre, dtype=frames.dtype)
            frames = frames + timbre
            mel = self.decoder.decode(frames).cpu().numpy()
            if mel_stats is not None:
                mean, std = mel_stats
                mel = mel * std + mean
            return mel, realized, durations
        finally:
            if was_training:
                self.train()

    def intensity_for_level(self, level: str, type_id: int, medians) -> float:
        """Map a named intensity level to a scalar: low=0.1, high=1, moderate=median."""
        if level == "low":
            return 0.1
        if level == "high":
            return 1.0
        if level == "moderate":
            if medians is None or type_id not in medians:
                raise LabelError(f"no stored intensity median for emotion {type_id}")
            return float(medians[type_id])
        raise ValueError(f"unknown intensity level {level!r}")

    def compute_logits(self, mel, lengths=None):
        hidden = self.emotion_encoder.extract_hidden(mel, lengths)
        return self.emotion_encoder.project_logits(hidden)

    def intensity_of(self, mel, alpha: float, lengths=None):
        """Posterior-probability intensity of real speech at its predicted type."""
        logits = self.compute_logits(mel, lengths)
        posterior = modified_softmax(logits, alpha)
        type_ids = logits.argmax(dim=-1)
        return type_ids, posterior.gather(-1, type_ids.unsqueeze(-1)).squeeze(-1)
