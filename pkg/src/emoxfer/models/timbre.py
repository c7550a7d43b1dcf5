"""Timbre encoder: speaker lookup table, or LSTM embedder + grouped VQ bottleneck.

The grouped vector quantizer splits a 256-wide speaker embedding into G
equal sub-vectors, snaps each to its nearest codeword from a shared
dictionary of size K, and concatenates the codewords back. Its information
capacity is G*log2(K) bits, the knob behind the emotion/speaker trade-off.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from ..config import ModelConfig
from ..errors import DataError, UnknownSpeakerError

SUPPORTED_GROUPS = (2, 4, 8)


class GroupedVQ(nn.Module):
    """EMA-learned grouped vector quantizer with straight-through gradients."""

    def __init__(
        self,
        d_model: int,
        n_groups: int,
        codebook_size: int,
        commitment: float = 0.25,
        ema_decay: float = 0.99,
        dead_steps: int = 1000,
    ):
        super().__init__()
        if d_model % n_groups != 0:
            raise ValueError(f"width {d_model} not divisible by {n_groups} groups")
        self.n_groups = n_groups
        self.codebook_size = codebook_size
        self.d_group = d_model // n_groups
        self.commitment = commitment
        self.ema_decay = ema_decay
        self.dead_steps = dead_steps
        scale = 1.0 / np.sqrt(d_model)
        self.register_buffer("codebook", torch.randn(codebook_size, self.d_group) * scale)
        self.register_buffer("last_used", torch.zeros(codebook_size, dtype=torch.int64))
        self.register_buffer("step", torch.zeros((), dtype=torch.int64))

    @property
    def capacity_bits(self) -> float:
        return self.n_groups * float(np.log2(self.codebook_size))

    def nearest_indices(self, groups):
        """groups: [B, G, d_group] -> nearest codeword index per group [B, G]."""
        distances = (
            (groups**2).sum(-1, keepdim=True)
            - 2.0 * groups @ self.codebook.t()
            + (self.codebook**2).sum(-1)
        )
        return distances.argmin(dim=-1)

    def forward(self, v, update: bool = False):
        """Quantize [B, d_model] (or [d_model]) speaker embeddings.

        Returns (timbre encoding with straight-through gradient, indices
        [B, G], commitment loss). EMA codebook updates run only when
        update=True.
        """
        squeeze = v.dim() == 1
        x = v.unsqueeze(0) if squeeze else v
        groups = x.view(x.shape[0], self.n_groups, self.d_group)
        indices = self.nearest_indices(groups)
        quantized = self.codebook[indices].view_as(x)
        commit = self.commitment * ((x - quantized.detach()) ** 2).sum(dim=-1).mean()
        # (x - x.detach()) is exactly zero forward, identity backward: the
        # output value is the quantized vector bit-for-bit.
        out = quantized.detach() + (x - x.detach())
        if update and self.training:
            self._ema_update(groups.detach(), indices)
        if squeeze:
            return out.squeeze(0), indices.squeeze(0), commit
        return out, indices, commit

    def _ema_update(self, groups, indices):
        flat = groups.reshape(-1, self.d_group)
        idx = indices.reshape(-1)
        counts = torch.bincount(idx, minlength=self.codebook_size).to(flat.dtype)
        sums = torch.zeros_like(self.codebook)
        sums.index_add_(0, idx, flat)
        used = counts > 0
        means = sums[used] / counts[used].unsqueeze(-1)
        self.codebook[used] = self.ema_decay * self.codebook[used] + (1.0 - self.ema_decay) * means
        self.step += 1
        self.last_used[used] = self.step
        # Revive codewords unused for too long from a random recent input.
        dead = (self.step - self.last_used) > self.dead_steps
        if bool(dead.any()):
            n_dead = int(dead.sum())
            pick = torch.randint(0, flat.shape[0], (n_dead,), device=flat.device)
            self.codebook[dead] = flat[pick]
            self.last_used[dead] = self.step


def set_capacity(vq: GroupedVQ, n_groups: int) -> GroupedVQ:
    """Fresh quantizer with a different group count (capacity G*log2 K)."""
    if n_groups not in SUPPORTED_GROUPS:
        raise ValueError(f"group count must be one of {SUPPORTED_GROUPS}, got {n_groups}")
    return GroupedVQ(
        d_model=vq.n_groups * vq.d_group,
        n_groups=n_groups,
        codebook_size=vq.codebook_size,
        commitment=vq.commitment,
        ema_decay=vq.ema_decay,
        dead_steps=vq.dead_steps,
    )


class SpeakerEmbedder(nn.Module):
    """Two stacked LSTMs over mel frames; last valid output -> affine -> L2 norm."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.lstm = nn.LSTM(
            cfg.n_mels, cfg.speaker_lstm_hidden, num_layers=2, batch_first=True
        )
        self.proj = nn.Linear(cfg.speaker_lstm_hidden, cfg.d_model)

    def forward(self, mel, lengths=None, return_pre_norm: bool = False):
        squeeze = mel.dim() == 2
        x = mel.unsqueeze(0) if squeeze else mel
        b, t, _ = x.shape
        if lengths is None:
            lengths = torch.full((b,), t, dtype=torch.int64)
        lengths = torch.as_tensor(lengths, dtype=torch.int64)
        output, _ = self.lstm(x)
        last = output[torch.arange(b), lengths - 1]
        pre = self.proj(last)
        normalized = pre / pre.norm(dim=-1, keepdim=True).clamp_min(1e-12)
        if squeeze:
            pre, normalized = pre.squeeze(0), normalized.squeeze(0)
        return (normalized, pre) if return_pre_norm else normalized


class TimbreEncoder(nn.Module):
    """Produces the 256-wide timbre encoding in lookup or zero-shot mode."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.mode = cfg.timbre_mode
        if self.mode == "lookup":
            self.table = nn.Embedding(cfg.n_speakers, cfg.d_model)
        elif self.mode == "zero_shot":
            self.embedder = SpeakerEmbedder(cfg)
            self.vq = GroupedVQ(
                cfg.d_model,
                cfg.vq_groups,
                cfg.vq_codebook_size,
                commitment=cfg.vq_commitment,
                ema_decay=cfg.vq_ema_decay,
                dead_steps=cfg.vq_dead_steps,
            )
        else:
            raise ValueError(f"unknown timbre mode {self.mode!r}")

    def lookup(self, speaker_idx):
        if self.mode != "lookup":
            raise UnknownSpeakerError("lookup requested but encoder is in zero-shot mode")
        idx = torch.as_tensor(speaker_idx, dtype=torch.int64)
        if int(idx.max() if idx.dim() else idx) >= self.table.num_embeddings or int(
            idx.min() if idx.dim() else idx
        ) < 0:
            raise UnknownSpeakerError(f"speaker index {speaker_idx} not in lookup table")
        return self.table(idx)

    def encode_utterances(self, mel, lengths=None, update: bool = False):
        """Zero-shot path: per-utterance timbre encoding through the bottleneck."""
        embedding = self.embedder(mel, lengths)
        return self.vq(embedding, update=update)

    def average_timbre(self, mels):
        """Mean of post-quantization encodings over reference utterances."""
        if len(mels) == 0:
            raise DataError("need at least one reference utterance")
        encodings = []
        with torch.no_grad():
            for mel in mels:
                timbre, _, _ = self.encode_utterances(mel.unsqueeze(0))
                encodings.append(timbre.squeeze(0))
        return torch.stack(encodings).mean(dim=0)


def load_external_embeddings(bin_path, index_path, d_model: int = 256) -> dict:
    """Import externally produced speaker embeddings.

    Binary file: little-endian float32, d_model floats per speaker.
    Index file: `speaker_id<TAB>offset` with offset counted in embeddings.
    """
    raw = np.fromfile(bin_path, dtype="<f4")
    if raw.size % d_model != 0:
        raise DataError(f"{bin_path}: size not a multiple of {d_model} floats")
    table = raw.reshape(-1, d_model)
    embeddings = {}
    with open(index_path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                speaker_id, offset = line.split("\t")
                offset = int(offset)
            except ValueError:
                raise DataError(f"{index_path}:{line_no}: malformed index row") from None
            if not 0 <= offset < table.shape[0]:
                raise DataError(f"{index_path}:{line_no}: offset {offset} out of range")
            embeddings[speaker_id] = torch.from_numpy(table[offset].copy())
    return embeddings
