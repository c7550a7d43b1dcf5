"""Standalone speech-emotion-recognition pipeline.

Trains a supervised classifier (the same CNN+GRU extractor as the emotion
encoder, with its own parameters), derives posterior-probability intensity
distributions across a sweep of softmax bases, and exports per-speaker label
reports and hidden features for external projection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .errors import DataError
from .matio import save_matrix
from .models.emotion import FeatureExtractor, modified_softmax, softmax_posterior
from .train.data import PreparedDataset

log = logging.getLogger(__name__)

N_HISTOGRAM_BINS = 20


class SerModel(nn.Module):
    """Feature extractor + affine head; posteriors via softmax over logits."""

    def __init__(self, cfg: ModelConfig, n_classes: int):
        super().__init__()
        if n_classes < 2:
            raise DataError(f"SER needs at least 2 classes, got {n_classes}")
        self.n_classes = n_classes
        self.extractor = FeatureExtractor(cfg)
        self.head = nn.Linear(cfg.emotion_hidden, n_classes)

    def logits(self, mel, lengths=None):
        return self.head(self.extractor(mel, lengths))

    def forward(self, mel, lengths=None):
        return softmax_posterior(self.logits(mel, lengths))


def predict_emotion(model: SerModel, mel) -> torch.Tensor:
    """Posterior distribution over emotion classes for one mel [T, n_mels]."""
    model.eval()
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        return model(torch.as_tensor(mel, dtype=dtype).unsqueeze(0)).squeeze(0)


def _pad_mels(utts, dataset):
    t_max = max(u.mel.shape[0] for u in utts)
    mel = torch.zeros(len(utts), t_max, utts[0].mel.shape[1])
    lengths = torch.zeros(len(utts), dtype=torch.int64)
    for i, u in enumerate(utts):
        mel[i, : u.mel.shape[0]] = torch.from_numpy(dataset.normalized_mel(u))
        lengths[i] = u.mel.shape[0]
    return mel, lengths


def train_ser(
    dataset: PreparedDataset,
    model_cfg: ModelConfig,
    steps: int = 300,
    batch_size: int = 16,
    lr: float = 1e-3,
    holdout_frac: float = 0.2,
    seed: int = 0,
):
    """Supervised training on the labeled part of a corpus.

    Returns (model, held_out_accuracy). The initial loss of an untrained
    model is ~ln(n_classes).
    """
    labeled = dataset.labeled()
    classes = sorted({u.label for u in labeled})
    if len(classes) < 2:
        raise DataError(f"need >= 2 labeled emotion classes, found {len(classes)}")
    if classes != list(range(len(classes))):
        raise DataError(f"labels must be contiguous from 0, found {classes}")

    torch.manual_seed(seed)
    model = SerModel(model_cfg, n_classes=len(classes))
    gen = torch.Generator().manual_seed(seed + 1)
    order = torch.randperm(len(labeled), generator=gen).tolist()
    n_hold = max(1, int(round(holdout_frac * len(labeled))))
    hold = [labeled[i] for i in order[:n_hold]]
    train = [labeled[i] for i in order[n_hold:]]
    if not train:
        raise DataError("not enough labeled utterances to train")

    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    model.train()
    for step in range(steps):
        picks = torch.randint(0, len(train), (batch_size,), generator=gen).tolist()
        utts = [train[i] for i in picks]
        mel, lengths = _pad_mels(utts, dataset)
        labels = torch.tensor([u.label for u in utts])
        loss = F.cross_entropy(model.logits(mel, lengths), labels)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

    model.eval()
    correct = 0
    with torch.no_grad():
        for u in hold:
            posterior = predict_emotion(model, dataset.normalized_mel(u))
            correct += int(int(posterior.argmax()) == u.label)
    accuracy = correct / len(hold)
    log.info("SER held-out accuracy: %.4f (%d utterances)", accuracy, len(hold))
    return model, accuracy


@dataclass
class IntensityReport:
    """Per-emotion histograms of intensity values for each alpha in a sweep."""

    alphas: list
    n_classes: int
    histograms: dict = field(default_factory=dict)  # (alpha, class) -> counts[20]
    n_utterances: int = 0

    def add(self, alpha: float, emotion: int, value: float) -> None:
        key = (alpha, emotion)
        if key not in self.histograms:
            self.histograms[key] = np.zeros(N_HISTOGRAM_BINS, dtype=np.int64)
        bin_idx = min(int(value * N_HISTOGRAM_BINS), N_HISTOGRAM_BINS - 1)
        self.histograms[key][bin_idx] += 1

    def total_mass(self, alpha: float) -> int:
        return int(
            sum(h.sum() for (a, _), h in self.histograms.items() if a == alpha)
        )

    def to_text(self) -> str:
        lines = ["alpha\temotion\t" + "\t".join(f"bin{i}" for i in range(N_HISTOGRAM_BINS))]
        for (alpha, emotion) in sorted(self.histograms):
            counts = "\t".join(str(int(c)) for c in self.histograms[(alpha, emotion)])
            lines.append(f"{alpha}\t{emotion}\t{counts}")
        return "\n".join(lines) + "\n"


def intensity_sweep(
    model: SerModel, dataset: PreparedDataset, alphas=(1.01, 1.2, 2.0)
) -> IntensityReport:
    """Intensity at the predicted class for every utterance, binned per alpha."""
    report = IntensityReport(alphas=list(alphas), n_classes=model.n_classes)
    model.eval()
    with torch.no_grad():
        for u in dataset.utterances:
            mel = torch.from_numpy(dataset.normalized_mel(u)).unsqueeze(0)
            z = model.logits(mel)
            predicted = int(z.argmax())
            for alpha in alphas:
                value = float(modified_softmax(z, alpha)[0, predicted])
                report.add(alpha, predicted, value)
            report.n_utterances += 1
    return report


def label_report(model: SerModel, dataset: PreparedDataset) -> dict:
    """Per-speaker percentage of utterances predicted as each class."""
    model.eval()
    counts: dict[str, np.ndarray] = {
        sid: np.zeros(model.n_classes, dtype=np.int64) for sid in dataset.speakers
    }
    with torch.no_grad():
        for u in dataset.utterances:
            posterior = predict_emotion(model, dataset.normalized_mel(u))
            counts[u.speaker_id][int(posterior.argmax())] += 1
    table = {}
    for sid in dataset.speakers:
        total = counts[sid].sum()
        if total == 0:
            log.warning("speaker %s has no utterances; omitted from label report", sid)
            continue
        table[sid] = {c: 100.0 * counts[sid][c] / total for c in range(model.n_classes)}
    return table


def label_report_text(table: dict) -> str:
    if not table:
        return "speaker\n"
    n_classes = len(next(iter(table.values())))
    lines = ["speaker\t" + "\t".join(f"class{c}" for c in range(n_classes))]
    for sid in sorted(table):
        lines.append(sid + "\t" + "\t".join(f"{table[sid][c]:.2f}" for c in range(n_classes)))
    return "\n".join(lines) + "\n"


def export_hidden(model: SerModel, dataset: PreparedDataset, matrix_path, index_path):
    """Hidden features as a float32 matrix plus a text index of IDs/labels."""
    model.eval()
    rows = []
    with torch.no_grad():
        for u in dataset.utterances:
            mel = torch.from_numpy(dataset.normalized_mel(u)).unsqueeze(0)
            rows.append(model.extractor(mel).squeeze(0).numpy())
    matrix = np.stack(rows).astype(np.float32)
    save_matrix(matrix_path, matrix)
    with open(index_path, "w") as fh:
        for u in dataset.utterances:
            label = "-" if u.label < 0 else str(u.label)
            fh.write(f"{u.utt_id}\t{label}\n")
    return matrix
