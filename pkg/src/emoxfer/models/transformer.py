"""Feed-forward transformer blocks: self-attention plus a conv feed-forward.

All blocks take an optional boolean validity mask [B, T] so padded batch
positions neither attend nor contribute; outputs at padded positions are
zeroed after every sublayer.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def sinusoidal_positions(n_positions: int, d_model: int, dtype=torch.float32, device=None):
    """Classic sin/cos position table, shape [n_positions, d_model]."""
    position = torch.arange(n_positions, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model)
    )
    table = torch.zeros(n_positions, d_model, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div[: d_model // 2])
    return table.to(dtype=dtype, device=device)


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        if d_model % n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, valid=None):
        b, t, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(b, t, self.n_heads, self.d_head).transpose(1, 2)
        k = k.view(b, t, self.n_heads, self.d_head).transpose(1, 2)
        v = v.view(b, t, self.n_heads, self.d_head).transpose(1, 2)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.d_head)
        if valid is not None:
            scores = scores.masked_fill(~valid[:, None, None, :], float("-inf"))
        attn = self.dropout(torch.softmax(scores, dim=-1))
        y = (attn @ v).transpose(1, 2).reshape(b, t, d)
        return self.out(y)


class ConvFeedForward(nn.Module):
    def __init__(self, d_model: int, d_hidden: int, kernel: int, dropout: float):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv1d(d_model, d_hidden, kernel, padding=pad)
        self.conv2 = nn.Conv1d(d_hidden, d_model, kernel, padding=pad)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        y = x.transpose(1, 2)
        y = self.conv2(F.relu(self.conv1(y)))
        return self.dropout(y.transpose(1, 2))


class FFTBlock(nn.Module):
    """Post-norm transformer block with a kernel-size-3 conv feed-forward."""

    def __init__(self, d_model: int, n_heads: int, d_hidden: int, kernel: int, dropout: float):
        super().__init__()
        self.attention = MultiHeadSelfAttention(d_model, n_heads, dropout)
        self.ffn = ConvFeedForward(d_model, d_hidden, kernel, dropout)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, valid=None):
        x = self.norm1(x + self.dropout(self.attention(x, valid)))
        if valid is not None:
            x = x * valid.unsqueeze(-1)
        x = self.norm2(x + self.ffn(x))
        if valid is not None:
            x = x * valid.unsqueeze(-1)
        return x


def lengths_to_mask(lengths, max_len: int | None = None, device=None):
    """Boolean [B, max_len] mask with True at valid positions."""
    lengths = torch.as_tensor(lengths, dtype=torch.int64, device=device)
    max_len = int(max_len or lengths.max().item())
    return torch.arange(max_len, device=lengths.device)[None, :] < lengths[:, None]
